"""Scenario configuration and backend runners.

A scenario is a flat JSON document with named blocks (model, initial
density, controller, disturbance, solver, output).  All functions are named
built-ins with numeric parameters; there is no expression language, so a
config file pins a run completely and two runs of the same config produce
byte-identical series.

Backends: ``spectral`` (coefficient solver), ``fd`` (finite differences,
1-d) and ``ode`` (the closed-loop mean equation, used as the oracle for the
other two).  Each run is persisted as a RunRecord directory.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

_trapezoid = getattr(np, "trapezoid", np.trapz)

from . import control, densities, fd, hermite, spectral
from .diagnostics import RunRecord
from .errors import ConfigError
from .model import build_model, disturbance

__all__ = [
    "DEFAULT_ORDER",
    "load_config",
    "resolve_config",
    "Scenario",
    "run_scenario",
    "builtin_config",
    "builtin_config_names",
]

#: default truncation order per dimension; overridable via the solver block
DEFAULT_ORDER = {1: 40, 2: 12, 3: 8}

#: extra quadrature points beyond the truncation order, so that projections
#: of degree <= 2k products integrate exactly with margin to spare
QUAD_MARGIN = 20

#: snapshot schedule named "fans": two dense fans of 61 snapshots each,
#: 0.025 apart, starting at t = 0 and t = 1.5
FAN_TIMES = sorted(
    {round(0.025 * i, 6) for i in range(61)}
    | {round(1.5 + 0.025 * i, 6) for i in range(61)}
)


def load_config(path):
    """Read a JSON scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("<file>", "top level must be a JSON object")
    return cfg


def _require(block, field, kinds, where):
    if field not in block:
        raise ConfigError(f"{where}.{field}", "missing required field")
    value = block[field]
    if kinds and not isinstance(value, kinds):
        raise ConfigError(
            f"{where}.{field}", f"expected {kinds}, got {type(value).__name__}"
        )
    return value


def resolve_config(cfg):
    """Fill defaults and validate ranges; returns the fully resolved dict.

    The resolved dict is echoed verbatim into every record's meta.json, so a
    persisted run is self-describing.
    """
    out = {"name": str(cfg.get("name", "scenario"))}

    model = dict(_require(cfg, "model", dict, "<root>"))
    c = _require(model, "c", (int, float), "model")
    if c <= 0:
        raise ConfigError("model.c", f"diffusion constant must be positive, got {c}")
    gamma = _require(model, "gamma", list, "model")
    model.setdefault("g", "identity")
    out["model"] = model
    dim = len(gamma)

    density = dict(_require(cfg, "initial_density", dict, "<root>"))
    _require(density, "name", str, "initial_density")
    out["initial_density"] = density

    ctl = dict(_require(cfg, "controller", dict, "<root>"))
    mode = _require(ctl, "mode", str, "controller")
    if mode not in ("funnel", "feedforward", "open_loop"):
        raise ConfigError("controller.mode", f"unknown mode {mode!r}")
    if mode in ("funnel", "feedforward"):
        _require(ctl, "reference", dict, "controller")
    if mode == "funnel":
        fun = dict(_require(ctl, "funnel", dict, "controller"))
        fun.setdefault("phi", {"name": "exp_plateau", "a": 2.0, "b": 2.0, "floor": 0.1})
        fun.setdefault("gain", {"name": "reciprocal"})
        fun.setdefault("switching", {"name": "s_cos_s"})
        fun.setdefault("xi", 1.2)
        ctl["funnel"] = fun
    out["controller"] = ctl

    out["disturbance"] = dict(cfg.get("disturbance", {"name": "zero"}))
    out["disturbance"].setdefault("name", "zero")

    solver = dict(cfg.get("solver", {}))
    solver.setdefault("backends", ["spectral"])
    if isinstance(solver["backends"], str):
        solver["backends"] = [solver["backends"]]
    for b in solver["backends"]:
        if b not in ("spectral", "fd", "ode"):
            raise ConfigError("solver.backends", f"unknown backend {b!r}")
    if dim not in DEFAULT_ORDER:
        raise ConfigError("model.gamma", f"dimension {dim} not supported (max 3)")
    solver.setdefault("order", DEFAULT_ORDER[dim])
    solver.setdefault("quad_points", int(solver["order"]) + QUAD_MARGIN)
    solver.setdefault("dt", 1e-3)
    solver.setdefault("horizon", 10.0)
    solver.setdefault("nx", 2001)
    solver.setdefault("half_width", 5.0)
    solver.setdefault("fd_dt", solver["dt"] / 10.0)
    solver.setdefault("snapshot_times", [])
    solver.setdefault("snapshot_points", solver["nx"])
    solver.setdefault("scan_points", 257)
    for key in ("dt", "horizon", "fd_dt", "half_width"):
        if not (isinstance(solver[key], (int, float)) and solver[key] > 0):
            raise ConfigError(f"solver.{key}", f"must be positive, got {solver[key]!r}")
    for key in ("order", "quad_points", "nx", "snapshot_points", "scan_points"):
        if not (isinstance(solver[key], int) and solver[key] > 0):
            raise ConfigError(
                f"solver.{key}", f"must be a positive integer, got {solver[key]!r}"
            )
    if solver["snapshot_times"] == "fans":
        solver["snapshot_times"] = FAN_TIMES
    out["solver"] = solver

    if "output" in cfg:
        out["output"] = str(cfg["output"])
    return out


class Scenario:
    """Resolved configuration with all objects built and validated."""

    def __init__(self, resolved):
        self.config = resolved
        mblock = resolved["model"]
        try:
            self.model = build_model(mblock["c"], mblock["gamma"], mblock["g"])
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from exc
        try:
            self.density = densities.initial_density(
                resolved["initial_density"], self.model
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError("initial_density", str(exc)) from exc
        try:
            dblock = resolved["disturbance"]
            self.disturbance = disturbance(
                dblock["name"], **{k: v for k, v in dblock.items() if k != "name"}
            )
        except ValueError as exc:
            raise ConfigError("disturbance", str(exc)) from exc

        ctl = resolved["controller"]
        self.mode = ctl["mode"]
        self.reference = None
        if "reference" in ctl:
            try:
                self.reference = control.reference_signal(
                    ctl["reference"], self.model.dim
                )
            except ValueError as exc:
                raise ConfigError("controller.reference", str(exc)) from exc
        self.funnel_spec = None
        if self.mode == "funnel":
            fun = ctl["funnel"]
            try:
                phi, phi_dot = control.funnel_function(fun["phi"])
                self.funnel_spec = control.FunnelSpec(
                    phi,
                    phi_dot,
                    control.gain_function(fun["gain"]),
                    control.switching_function(fun["switching"]),
                    self.reference,
                    fun["xi"],
                )
            except (KeyError, ValueError) as exc:
                raise ConfigError("controller.funnel", str(exc)) from exc

        self.solver = resolved["solver"]
        self.validate()

    def validate(self):
        """Pre-run feasibility checks; everything here fails before solving."""
        solver = self.solver
        horizon = solver["horizon"]
        mass = float(self.density.mass())
        mean0 = np.atleast_1d(self.density.mean())

        if self.mode == "funnel":
            if abs(mass) < 1e-12:
                raise ConfigError(
                    "initial_density", "funnel control requires nonzero initial mass"
                )
            try:
                self.funnel_spec.validate(horizon)
                self.funnel_spec.check_initial(mean0)
            except ValueError as exc:
                raise ConfigError("controller.funnel", str(exc)) from exc
            if not self.model.g.high_gain:
                raise ConfigError(
                    "model.g",
                    f"nonlinearity {self.model.g.name!r} does not carry the "
                    "unbounded-gain property funnel control requires",
                )

        if not self.disturbance.is_zero and self.disturbance.zero_mass:
            rule = hermite.build_rule(self.model, 48)
            times = [0.0, horizon / 3.0, 2.0 * horizon / 3.0, horizon]
            try:
                self.disturbance.verify_zero_mass(rule, times)
            except ValueError as exc:
                raise ConfigError("disturbance", str(exc)) from exc

        if "fd" in solver["backends"]:
            if self.model.dim != 1:
                raise ConfigError("solver.backends", "fd backend is 1-d only")
            h = 2.0 * solver["half_width"] / (solver["nx"] - 1)
            try:
                fd.check_fd_time_step(self.model, h, solver["fd_dt"])
            except ValueError as exc:
                raise ConfigError("solver.fd_dt", str(exc)) from exc
            ratio = solver["dt"] / solver["fd_dt"]
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(
                    "solver.fd_dt", "series step dt must be a multiple of fd_dt"
                )

        if "spectral" in solver["backends"]:
            lam_max = solver["order"] * float(np.max(self.model.rates))
            if solver["dt"] * self.model.c * lam_max > spectral.RK4_STABILITY:
                raise ConfigError(
                    "solver.dt",
                    f"unstable for the stiffest mode; use dt <= "
                    f"{spectral.RK4_STABILITY / (self.model.c * lam_max):.3e}",
                )

    def make_controller(self):
        if self.mode == "funnel":
            return control.FunnelController(self.funnel_spec)
        if self.mode == "feedforward":
            return control.FeedforwardController(self.model.gamma, self.reference)
        return control.OpenLoopInput(dim=self.model.dim)

    # -- recording helpers -------------------------------------------------

    def _snapshot_indices(self, dt, steps):
        out = {}
        for t in self.solver["snapshot_times"]:
            idx = int(round(t / dt))
            if idx <= steps and abs(idx * dt - t) < 1e-9:
                out[idx] = float(t)
        return out

    def _row(self, controller, t, y):
        u = controller.input(t, y)
        if self.reference is not None:
            e = y - self.reference(t)
        else:
            e = np.full_like(y, np.nan)
        fun = np.nan
        if self.mode == "funnel":
            fun = self.funnel_spec.phi(t) * float(np.linalg.norm(e))
        return u, e, fun

    def _empty_series(self, rows):
        n = self.model.dim
        return {
            "t": np.empty(rows),
            "y": np.empty((rows, n)),
            "u": np.empty((rows, n)),
            "e": np.empty((rows, n)),
            "funnel": np.empty(rows),
            "mass": np.empty(rows),
            "cov": np.empty((rows, n, n)),
            "hnorm": np.empty(rows),
            "min_density": np.empty(rows),
        }

    def _record(self, backend, params, series, snapshots):
        return RunRecord(
            scenario=self.config,
            backend=backend,
            params=params,
            snapshots=snapshots,
            **series,
        )

    # -- backends ----------------------------------------------------------

    def run_spectral(self):
        solver = self.solver
        model = self.model
        basis = hermite.build_basis(model, solver["order"])
        rule = hermite.build_rule(model, solver["quad_points"])
        spectral.check_time_step(basis, model, solver["dt"])
        state = spectral.project_initial(self.density, basis, rule)
        controller = self.make_controller()

        dt = solver["dt"]
        steps = int(round(solver["horizon"] / dt))
        series = self._empty_series(steps + 1)
        snapshots = []
        snap_at = self._snapshot_indices(dt, steps)

        scan_w = snap_w = None
        if model.dim == 1:
            scan_x = np.linspace(
                -solver["half_width"], solver["half_width"], solver["scan_points"]
            )
            scan_w = basis.eval_weighted(scan_x[:, None])
            snap_x = np.linspace(
                -solver["half_width"], solver["half_width"], solver["snapshot_points"]
            )
            snap_w = basis.eval_weighted(snap_x[:, None])

        for i in range(steps + 1):
            t = i * dt
            state.t = t
            mass, mean, cov = spectral.moments(state, model)
            u, e, fun = self._row(controller, t, mean)
            series["t"][i] = t
            series["y"][i] = mean
            series["u"][i] = u
            series["e"][i] = e
            series["funnel"][i] = fun
            series["mass"][i] = mass
            series["cov"][i] = cov
            series["hnorm"][i] = state.hnorm()
            series["min_density"][i] = (
                float(np.min(scan_w.T @ state.coef)) if scan_w is not None else np.nan
            )
            if i in snap_at:
                snapshots.append((snap_at[i], snap_x.copy(), snap_w.T @ state.coef))
            if i < steps:
                state = spectral.step(
                    state, controller, self.disturbance, model, dt, rule
                )

        params = {
            "order": solver["order"],
            "quad_points": solver["quad_points"],
            "dt": dt,
            "horizon": solver["horizon"],
            "tail_fraction_final": state.tail_fraction(),
        }
        return self._record("spectral", params, series, snapshots)

    def run_fd(self):
        solver = self.solver
        model = self.model
        state = fd.make_grid_state(self.density, solver["half_width"], solver["nx"])
        controller = self.make_controller()

        dt_fd = solver["fd_dt"]
        every = int(round(solver["dt"] / dt_fd))
        rows = int(round(solver["horizon"] / solver["dt"])) + 1
        series = self._empty_series(rows)
        snapshots = []
        snap_at = self._snapshot_indices(solver["dt"], rows - 1)
        envelope = np.exp(model.phi(state.x[:, None]))

        for i in range(rows):
            t = i * solver["dt"]
            state.t = t
            mass, mean, var = fd.fd_moments(state)
            y = np.array([mean])
            u, e, fun = self._row(controller, t, y)
            series["t"][i] = t
            series["y"][i] = y
            series["u"][i] = u
            series["e"][i] = e
            series["funnel"][i] = fun
            series["mass"][i] = mass
            series["cov"][i] = var
            series["hnorm"][i] = math.sqrt(
                float(_trapezoid(envelope * state.p**2, dx=state.h))
            )
            series["min_density"][i] = float(np.min(state.p))
            if i in snap_at:
                snapshots.append((snap_at[i], state.x.copy(), state.p.copy()))
            if i < rows - 1:
                for _ in range(every):
                    state = fd.fd_step(state, controller, self.disturbance, model, dt_fd)

        params = {
            "nx": solver["nx"],
            "half_width": solver["half_width"],
            "dt": dt_fd,
            "series_dt": solver["dt"],
            "horizon": solver["horizon"],
        }
        return self._record("fd", params, series, snapshots)

    def run_ode(self):
        solver = self.solver
        model = self.model
        controller = self.make_controller()
        mass = float(self.density.mass())
        mean0 = np.atleast_1d(self.density.mean())

        dist_mean = None
        if not self.disturbance.is_zero:
            if hasattr(self.disturbance, "spatial_mean"):
                sm = self.disturbance.spatial_mean(model.dim)
                tf = self.disturbance.time_factor
                dist_mean = lambda t: tf(t) * sm
            else:
                rule = hermite.build_rule(model, solver["quad_points"])
                dist_mean = lambda t: self.disturbance.mean(t, rule)

        ts, ys, us = control.mean_ode_closed_loop(
            controller, model, mass, mean0, dist_mean, solver["horizon"], solver["dt"]
        )
        rows = len(ts)
        series = self._empty_series(rows)
        series["t"] = ts
        series["y"] = ys
        series["u"] = us
        for i, t in enumerate(ts):
            if self.reference is not None:
                series["e"][i] = ys[i] - self.reference(t)
            else:
                series["e"][i] = np.nan
            series["funnel"][i] = (
                self.funnel_spec.phi(t) * float(np.linalg.norm(series["e"][i]))
                if self.mode == "funnel"
                else np.nan
            )
        series["mass"][:] = mass
        series["cov"][:] = np.nan
        series["hnorm"][:] = np.nan
        series["min_density"][:] = np.nan

        params = {"dt": solver["dt"], "horizon": solver["horizon"]}
        return self._record("ode", params, series, [])

    def run(self, backend):
        if backend == "spectral":
            return self.run_spectral()
        if backend == "fd":
            return self.run_fd()
        if backend == "ode":
            return self.run_ode()
        raise ConfigError("solver.backends", f"unknown backend {backend!r}")


def run_scenario(config, backends=None):
    """Run a scenario (path, raw dict, or resolved dict) on selected backends.

    Returns {backend: RunRecord}.
    """
    if isinstance(config, (str, Path)):
        config = load_config(config)
    resolved = resolve_config(config)
    scn = Scenario(resolved)
    if backends is None:
        backends = resolved["solver"]["backends"]
    return {b: scn.run(b) for b in backends}


def builtin_config_names():
    root = resources.files("oufunnel") / "configs"
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def builtin_config(name):
    """Load a bundled scenario config by name (see builtin_config_names)."""
    path = resources.files("oufunnel") / "configs" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(
            "<file>", f"no bundled config {name!r}; available: {builtin_config_names()}"
        )
    return json.loads(path.read_text())
