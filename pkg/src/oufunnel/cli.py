"""Command-line scenario runner.

Subcommands::

    run <config>... [--backend B] [--out DIR] [--jobs N] [--no-plots]
    compare <dirA> <dirB> [--out FILE]
    check <dir>
    plot <dir> [--out DIR] [--format svg|png]

`run` accepts config file paths or bundled scenario names, persists one
record directory per backend, prints the diagnostic summary (one pass/fail
line per check) and renders the report figures next to the CSV output.
Exit status is nonzero iff any enabled check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import scenario as scenario_mod
from .diagnostics import RunRecord, cross_validate, run_checks
from .errors import ConfigError
from .model import build_model
from .scenario import Scenario, builtin_config, builtin_config_names


def _load(config_arg):
    path = Path(config_arg)
    if path.exists():
        return scenario_mod.load_config(path)
    if config_arg in builtin_config_names():
        return builtin_config(config_arg)
    raise ConfigError("<file>", f"no such config file or bundled scenario: {config_arg}")


def _run_one(config_arg, backend, out, plots):
    cfg = _load(config_arg)
    resolved = scenario_mod.resolve_config(cfg)
    scn = Scenario(resolved)
    backends = [backend] if backend and backend != "all" else resolved["solver"]["backends"]
    out_root = Path(out) if out else Path(resolved.get("output", f"runs/{resolved['name']}"))

    failed = False
    for b in backends:
        record = scn.run(b)
        rec_dir = out_root / b
        record.save(rec_dir)
        print(f"[{resolved['name']}/{b}] record written to {rec_dir}")
        for result in run_checks(record, scn.model):
            mark = "PASS" if result.passed else "FAIL"
            print(f"[{resolved['name']}/{b}] {mark} {result.name}: {result.detail}")
            failed |= not result.passed
        if plots:
            from .plotting import render_record

            figures = render_record(record, rec_dir / "figures")
            print(f"[{resolved['name']}/{b}] figures: {', '.join(p.name for p in figures)}")
    return failed


def cmd_run(args):
    jobs = max(1, args.jobs)
    if jobs == 1 or len(args.config) == 1:
        results = [
            _run_one(c, args.backend, args.out if len(args.config) == 1 else None, not args.no_plots)
            for c in args.config
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_one, c, args.backend, None, not args.no_plots)
                for c in args.config
            ]
            results = [f.result() for f in futures]
    return 1 if any(results) else 0


def cmd_compare(args):
    rec_a = RunRecord.load(args.dir_a)
    rec_b = RunRecord.load(args.dir_b)
    report = cross_validate(rec_a, rec_b)
    out = Path(args.out) if args.out else Path("compare_report.json")
    out.write_text(json.dumps(report, indent=2))
    print(f"backends: {report['backends'][0]} vs {report['backends'][1]}")
    print(f"mean trajectory sup gap: {report['mean_sup_gap']:.6g}")
    print(f"mass gap:                {report['mass_gap']:.6g}")
    if report["snapshot_gaps"]:
        print(f"worst snapshot L2 gap:   {report['max_snapshot_gap']:.6g}")
    print(f"report written to {out}")
    return 0


def cmd_check(args):
    record = RunRecord.load(args.dir)
    mblock = record.scenario["model"]
    model = build_model(mblock["c"], mblock["gamma"], mblock.get("g", "identity"))
    failed = False
    for result in run_checks(record, model):
        mark = "PASS" if result.passed else "FAIL"
        print(f"{mark} {result.name}: {result.detail}")
        failed |= not result.passed
    return 1 if failed else 0


def cmd_plot(args):
    from .plotting import render_record

    record = RunRecord.load(args.dir)
    out = Path(args.out) if args.out else Path(args.dir) / "figures"
    for path in render_record(record, out, fmt=args.format):
        print(path)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="oufunnel",
        description="Controlled Ornstein-Uhlenbeck density simulation and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenario config(s)")
    p_run.add_argument("config", nargs="+", help="config path or bundled name")
    p_run.add_argument(
        "--backend", choices=["spectral", "fd", "ode", "all"], default=None
    )
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    p_run.add_argument("--no-plots", action="store_true", help="skip report figures")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="cross-validate two record directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--out", default=None, help="report JSON path")
    p_cmp.set_defaults(fn=cmd_compare)

    p_chk = sub.add_parser("check", help="re-run diagnostics on a record directory")
    p_chk.add_argument("dir")
    p_chk.set_defaults(fn=cmd_check)

    p_plot = sub.add_parser("plot", help="render report figures for a record")
    p_plot.add_argument("dir")
    p_plot.add_argument("--out", default=None)
    p_plot.add_argument("--format", choices=["svg", "png"], default="svg")
    p_plot.set_defaults(fn=cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
