"""Persisted run records and the closed-form property checks.

Every solver run is reduced to a :class:`RunRecord`: the recorded time
series (output, input, error, funnel margin, mass, covariance, weighted
norm, minimum density) plus density snapshots.  All checks operate on
records, never on live solver state, so replays of a persisted run are
deterministic.  A record round-trips through a directory::

    meta.json            resolved scenario + backend + parameters + stamp
    series.csv           one row per recorded step (column order below)
    snapshots/t_<ms>.csv x,p rows per snapshot time (milliseconds, 6 digits)

series.csv columns: t, y1..yn, u1..un, e1..en, funnel, mass,
cov_11..cov_nn (row-major), hnorm, min_density.  Numbers are written with
the shortest round-trip decimal representation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_trapezoid = getattr(np, "trapezoid", np.trapz)

__all__ = [
    "RunRecord",
    "scenario_stamp",
    "CovarianceCheck",
    "check_covariance_law",
    "check_funnel",
    "check_mass_constancy",
    "check_positivity",
    "check_hnorm_bounded",
    "negativity_observed",
    "cross_validate",
    "CheckResult",
    "run_checks",
]

FORMAT_VERSION = 1

#: a density value below this counts as genuinely negative (beyond scheme
#: and truncation roundoff) when reporting negativity of disturbed runs
NEGATIVITY_THRESHOLD = -1e-5


def scenario_stamp(scenario):
    """Hash of the physics blocks of a scenario (solver/output excluded).

    Records of the same scenario run by different backends share the stamp;
    cross-validation refuses records whose stamps differ.
    """
    blocks = {
        k: scenario.get(k)
        for k in ("model", "initial_density", "controller", "disturbance", "name")
    }
    payload = json.dumps(blocks, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    """Time series and snapshots of one solver run."""

    scenario: dict
    backend: str
    params: dict
    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    funnel: np.ndarray
    mass: np.ndarray
    cov: np.ndarray
    hnorm: np.ndarray
    min_density: np.ndarray
    snapshots: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("record time grid must be strictly increasing")
        m = len(self.t)
        for name in ("y", "u", "e", "funnel", "mass", "cov", "hnorm", "min_density"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"series {name!r} length mismatch")

    @property
    def dim(self):
        return self.y.shape[1]

    @property
    def stamp(self):
        return scenario_stamp(self.scenario)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "format": FORMAT_VERSION,
            "backend": self.backend,
            "params": self.params,
            "scenario": self.scenario,
            "stamp": self.stamp,
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

        n = self.dim
        header = (
            ["t"]
            + [f"y{i+1}" for i in range(n)]
            + [f"u{i+1}" for i in range(n)]
            + [f"e{i+1}" for i in range(n)]
            + ["funnel", "mass"]
            + [f"cov_{i+1}{j+1}" for i in range(n) for j in range(n)]
            + ["hnorm", "min_density"]
        )
        with open(directory / "series.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self.t)):
                row = (
                    [self.t[i]]
                    + list(self.y[i])
                    + list(self.u[i])
                    + list(self.e[i])
                    + [self.funnel[i], self.mass[i]]
                    + list(self.cov[i].ravel())
                    + [self.hnorm[i], self.min_density[i]]
                )
                writer.writerow([repr(float(v)) for v in row])

        if self.snapshots:
            snapdir = directory / "snapshots"
            snapdir.mkdir(exist_ok=True)
            for t, x, vals in self.snapshots:
                ms = int(round(1000.0 * t))
                with open(snapdir / f"t_{ms:06d}.csv", "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["x", "p"])
                    for xi, pi in zip(x, vals):
                        writer.writerow([repr(float(xi)), repr(float(pi))])
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        rows = []
        with open(directory / "series.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            for row in reader:
                rows.append([float(v) for v in row])
        data = np.asarray(rows)
        cols = {name: k for k, name in enumerate(header)}
        n = sum(1 for name in cols if name.startswith("y"))
        t = data[:, cols["t"]]
        y = data[:, [cols[f"y{i+1}"] for i in range(n)]]
        u = data[:, [cols[f"u{i+1}"] for i in range(n)]]
        e = data[:, [cols[f"e{i+1}"] for i in range(n)]]
        cov = data[
            :, [cols[f"cov_{i+1}{j+1}"] for i in range(n) for j in range(n)]
        ].reshape(-1, n, n)
        snapshots = []
        snapdir = directory / "snapshots"
        if snapdir.is_dir():
            for path in sorted(snapdir.glob("t_*.csv")):
                ms = int(path.stem.split("_")[1])
                snap = np.loadtxt(path, delimiter=",", skiprows=1)
                snapshots.append((ms / 1000.0, snap[:, 0], snap[:, 1]))
        return cls(
            scenario=meta["scenario"],
            backend=meta["backend"],
            params=meta["params"],
            t=t,
            y=y,
            u=u,
            e=e,
            funnel=data[:, cols["funnel"]],
            mass=data[:, cols["mass"]],
            cov=cov,
            hnorm=data[:, cols["hnorm"]],
            min_density=data[:, cols["min_density"]],
            snapshots=snapshots,
        )


@dataclass
class CovarianceCheck:
    """Fit of the exponential covariance law to a recorded run.

    The whitened second-moment matrix P(t) = 4 A Cov(t) A^T - 2 I (A the
    model's axes map) obeys P(t) = E(t) P(0) E(t) with E(t) = exp(-c Lam t)
    diagonal, for any input, as long as the disturbance vanishes and the
    mass is one.  K is P(0); the prediction reproduces Cov(0) exactly by
    construction.
    """

    fitted: np.ndarray
    max_deviation: float
    deviations: np.ndarray


def check_covariance_law(record, model):
    """Fit K at t = 0 and report the worst deviation from the predicted law."""
    if not np.all(np.isfinite(record.cov[0])):
        raise ValueError("record has no covariance series; check inapplicable")
    if abs(record.mass[0] - 1.0) > 1e-6:
        raise ValueError(
            f"covariance law needs mass one, record has {record.mass[0]!r}"
        )
    axes = model.axes
    eye = np.eye(model.dim)
    pseries = 4.0 * axes @ record.cov @ axes.T - eye[None] * 2.0
    fitted = pseries[0]
    decay = np.exp(-model.c * model.rates[None, :] * record.t[:, None])  # (m, n)
    pred = decay[:, :, None] * fitted[None] * decay[:, None, :]
    deviations = np.linalg.norm(pseries - pred, axis=(1, 2))
    return CovarianceCheck(fitted, float(np.max(deviations)), deviations)


def check_funnel(record):
    """(eps_observed, pass): worst funnel value phi |e| and whether < 1."""
    if np.all(np.isnan(record.funnel)):
        raise ValueError("record was not produced in funnel mode")
    eps = float(np.nanmax(record.funnel))
    return eps, eps < 1.0


def check_mass_constancy(record, tol):
    """(drift, pass): worst |mass(t) - mass(0)| against the tolerance."""
    drift = float(np.max(np.abs(record.mass - record.mass[0])))
    return drift, drift <= tol


def check_positivity(record, floor):
    """(min, pass): smallest recorded density value against a floor."""
    lo = float(np.min(record.min_density))
    return lo, lo >= floor


def check_hnorm_bounded(record, factor=100.0):
    """(ratio, pass): growth of the weighted norm relative to its start.

    The dynamics keep the weighted norm bounded, but the bound is far from
    the initial value when the mean is steered away from the origin (the
    envelope weight grows like exp of the squared mean); the default factor
    is a blowup guard, not a tight constant.
    """
    start = record.hnorm[0]
    if not math.isfinite(start) or start == 0.0:
        raise ValueError("record has no weighted-norm series")
    ratio = float(np.max(record.hnorm) / start)
    return ratio, ratio <= factor


def negativity_observed(record):
    """Whether the run produced genuinely negative density values."""
    return bool(np.min(record.min_density) < NEGATIVITY_THRESHOLD)


def _interp_series(t_from, values, t_to):
    if values.ndim == 1:
        return np.interp(t_to, t_from, values)
    return np.stack(
        [np.interp(t_to, t_from, values[:, j]) for j in range(values.shape[1])],
        axis=1,
    )


def cross_validate(rec_a, rec_b):
    """Gap report between two records of the same scenario.

    Interpolates record B linearly onto record A's time grid over the common
    span and reports the sup-norm mean gap, the mass gap, and L2 gaps of
    snapshots taken at matching times.  Records with different scenario
    stamps are rejected.
    """
    if rec_a.stamp != rec_b.stamp:
        raise ValueError(
            f"scenario mismatch: {rec_a.stamp} (backend {rec_a.backend}) vs "
            f"{rec_b.stamp} (backend {rec_b.backend})"
        )
    t0 = max(rec_a.t[0], rec_b.t[0])
    t1 = min(rec_a.t[-1], rec_b.t[-1])
    sel = (rec_a.t >= t0) & (rec_a.t <= t1)
    tt = rec_a.t[sel]
    yb = _interp_series(rec_b.t, rec_b.y, tt)
    mean_gap = float(np.max(np.abs(rec_a.y[sel] - yb))) if tt.size else float("nan")
    mb = _interp_series(rec_b.t, rec_b.mass, tt)
    mass_gap = float(np.max(np.abs(rec_a.mass[sel] - mb))) if tt.size else float("nan")

    snap_gaps = []
    times_b = {round(t, 9): (x, v) for t, x, v in rec_b.snapshots}
    for t, x, v in rec_a.snapshots:
        match = times_b.get(round(t, 9))
        if match is None:
            continue
        xb, vb = match
        vb_on_a = np.interp(x, xb, vb) if len(xb) != len(x) or np.any(xb != x) else vb
        gap = math.sqrt(float(_trapezoid((v - vb_on_a) ** 2, x)))
        snap_gaps.append({"t": float(t), "l2_gap": gap})

    return {
        "stamp": rec_a.stamp,
        "backends": [rec_a.backend, rec_b.backend],
        "overlap": [float(t0), float(t1)],
        "mean_sup_gap": mean_gap,
        "mass_gap": mass_gap,
        "snapshot_gaps": snap_gaps,
        "max_snapshot_gap": max((g["l2_gap"] for g in snap_gaps), default=float("nan")),
    }


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


#: per-backend tolerances for the standard check battery
MASS_TOL = {"spectral": 1e-10, "fd": 1e-4}
COVARIANCE_TOL = 1e-3


def _positivity_floor(record):
    if record.backend == "fd":
        return -1e-6
    # spectral reconstruction of a discontinuous start oscillates; assert
    # relative to the truncation artifact already present at t = 0
    level = min(0.0, float(record.min_density[0]))
    return 1.05 * level - 1e-8


def run_checks(record, model):
    """The standard battery for one record; returns CheckResult rows.

    Which checks apply depends on the backend (the mean-ODE backend carries
    no density) and on the scenario (positivity and the covariance law only
    hold without disturbance).
    """
    results = []
    dist = record.scenario.get("disturbance", {"name": "zero"})
    clean = dist.get("name", "zero") == "zero"
    zero_mass_ok = clean or dist.get("zero_mass", False)
    has_density = record.backend in ("spectral", "fd")

    if not np.all(np.isnan(record.funnel)):
        eps, ok = check_funnel(record)
        detail = f"max phi|e| = {eps:.6g}"
        if not ok:
            first = record.t[int(np.argmax(record.funnel >= 1.0))]
            detail += f", first violation at t = {first:g}"
        results.append(CheckResult("funnel_margin", ok, detail))

    if has_density and zero_mass_ok:
        tol = MASS_TOL[record.backend]
        drift, ok = check_mass_constancy(record, tol)
        results.append(
            CheckResult("mass_constancy", ok, f"drift = {drift:.3e} (tol {tol:g})")
        )

    if has_density and clean:
        floor = _positivity_floor(record)
        lo, ok = check_positivity(record, floor)
        results.append(
            CheckResult("positivity", ok, f"min density = {lo:.3e} (floor {floor:.3e})")
        )

    if has_density:
        try:
            ratio, ok = check_hnorm_bounded(record)
            results.append(
                CheckResult("hnorm_bounded", ok, f"max/initial = {ratio:.4g}")
            )
        except ValueError:
            pass

    if (
        has_density
        and clean
        and abs(record.mass[0] - 1.0) <= 1e-6
        and np.all(np.isfinite(record.cov[0]))
    ):
        cc = check_covariance_law(record, model)
        results.append(
            CheckResult(
                "covariance_law",
                cc.max_deviation <= COVARIANCE_TOL,
                f"max deviation = {cc.max_deviation:.3e} (tol {COVARIANCE_TOL:g})",
            )
        )

    if has_density and not clean:
        results.append(
            CheckResult(
                "negativity_report",
                True,
                f"min density = {float(np.min(record.min_density)):.3e} "
                f"(negative values {'observed' if negativity_observed(record) else 'not observed'})",
            )
        )
    return results
