"""Controllers and the closed-loop mean ODE.

The funnel controller u = switching(gain(|w|^2)) w with w = phi (y - y_ref)
keeps the tracking error inside the prescribed boundary 1/phi without any
model knowledge; the feedforward law u = y_ref' + Gamma y_ref needs the
drift matrix but tracks exponentially when g is the identity and no
disturbance acts.  ``mean_ode_closed_loop`` integrates the n-dimensional
output equation y' = -Gamma y + P0 g(u) + dbar(t), which is the independent
oracle the PDE solvers' mean trajectories are checked against.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import FunnelViolation

__all__ = [
    "ReferenceSignal",
    "reference_signal",
    "FunnelSpec",
    "funnel_function",
    "gain_function",
    "switching_function",
    "FunnelController",
    "funnel_input",
    "FeedforwardController",
    "feedforward_input",
    "OpenLoopInput",
    "mean_ode_closed_loop",
    "disturbance_mean",
]

#: numerical guard: abort before evaluating the gain at its pole.  An abort
#: is a numerical failure of the discretization, never a controller property.
GAIN_POLE_GUARD = 1e-12


class ReferenceSignal:
    """Bounded reference trajectory with an available derivative."""

    def __init__(self, value, derivative, name="custom"):
        self.value = value
        self.derivative = derivative
        self.name = name

    def __call__(self, t):
        return np.atleast_1d(np.asarray(self.value(t), dtype=float))

    def dot(self, t):
        return np.atleast_1d(np.asarray(self.derivative(t), dtype=float))


def reference_signal(spec, dim):
    """Build a named reference signal broadcast to `dim` components.

    Built-ins: ``sin`` (amplitude * sin(frequency t)), ``constant`` (value),
    ``zero``.
    """
    name = spec.get("name")
    if name == "sin":
        amp = np.broadcast_to(
            np.asarray(spec.get("amplitude", 1.0), dtype=float), (dim,)
        ).copy()
        freq = float(spec.get("frequency", 1.0))
        return ReferenceSignal(
            lambda t: amp * math.sin(freq * t),
            lambda t: amp * freq * math.cos(freq * t),
            "sin",
        )
    if name == "constant":
        val = np.broadcast_to(
            np.asarray(spec.get("value", 0.0), dtype=float), (dim,)
        ).copy()
        return ReferenceSignal(lambda t: val, lambda t: np.zeros(dim), "constant")
    if name == "zero":
        zero = np.zeros(dim)
        return ReferenceSignal(lambda t: zero, lambda t: zero, "zero")
    raise ValueError(
        f"unknown reference {name!r}; built-ins: ['sin', 'constant', 'zero']"
    )


def funnel_function(spec):
    """Named funnel boundary function, returned as (phi, phi_dot).

    Built-ins: ``exp_plateau`` with phi(t) = 1 / (a exp(-b t) + floor) and
    ``constant``.
    """
    name = spec.get("name")
    if name == "exp_plateau":
        a = float(spec.get("a", 2.0))
        b = float(spec.get("b", 2.0))
        floor = float(spec.get("floor", 0.1))

        def phi(t):
            return 1.0 / (a * math.exp(-b * t) + floor)

        def phi_dot(t):
            return a * b * math.exp(-b * t) * phi(t) ** 2

        return phi, phi_dot
    if name == "constant":
        v = float(spec.get("value", 1.0))
        return (lambda t: v), (lambda t: 0.0)
    raise ValueError(
        f"unknown funnel function {name!r}; built-ins: ['exp_plateau', 'constant']"
    )


def gain_function(spec):
    """Named gain bijection [0, 1) -> [1, inf).  Built-in: ``reciprocal``."""
    name = spec.get("name")
    if name == "reciprocal":
        return lambda s: 1.0 / (1.0 - s)
    raise ValueError(f"unknown gain function {name!r}; built-ins: ['reciprocal']")


def switching_function(spec):
    """Named switching surjection.  Built-in: ``s_cos_s``."""
    name = spec.get("name")
    if name == "s_cos_s":
        return lambda s: s * math.cos(s)
    raise ValueError(f"unknown switching function {name!r}; built-ins: ['s_cos_s']")


class FunnelSpec:
    """Design triple (phi, gain, switching) plus the reference signal.

    phi must belong to the admissible class: positive for t > 0, bounded
    away from zero eventually, and with |phi'| <= xi (1 + phi).  phi(0) = 0
    is allowed and lifts the restriction on the initial error.
    """

    def __init__(self, phi, phi_dot, gain, switching, reference, xi=1.0):
        self.phi = phi
        self.phi_dot = phi_dot
        self.gain = gain
        self.switching = switching
        self.reference = reference
        self.xi = float(xi)

    def validate(self, horizon, samples=512):
        """Sampled-grid membership checks.

        The bijectivity of the gain and surjectivity of the switching
        function cannot be verified on samples; this checks the grid proxies
        (gain(0) = 1, monotone increase, switching attains both signs) and
        the growth bound on phi.  A pass is necessary, not sufficient.
        """
        ts = np.linspace(0.0, horizon, samples)
        for t in ts[1:]:
            if self.phi(t) <= 0:
                raise ValueError(f"funnel function must be positive for t > 0 (t={t})")
        if self.phi(horizon) <= 0:
            raise ValueError("funnel function must stay positive at the horizon")
        for t in ts:
            bound = self.xi * (1.0 + self.phi(t)) + 1e-9
            if abs(self.phi_dot(t)) > bound:
                raise ValueError(
                    f"funnel derivative bound violated at t={t:.4g}: "
                    f"|phi'|={abs(self.phi_dot(t)):.4g} > xi (1 + phi) = {bound:.4g}"
                )
        if abs(self.gain(0.0) - 1.0) > 1e-12:
            raise ValueError("gain function must map 0 to 1")
        ss = np.linspace(0.0, 0.99, 100)
        gains = [self.gain(s) for s in ss]
        if np.any(np.diff(gains) <= 0):
            raise ValueError("gain function must be increasing on [0, 1)")
        probe = [self.switching(s) for s in np.linspace(0.0, 60.0, 2048)]
        if max(probe) < 0.5 or min(probe) > -0.5:
            raise ValueError("switching function fails the sampled range probe")

    def check_initial(self, y0):
        """Reject configurations that start outside the funnel.

        Skipped when phi(0) = 0 (boundary pole at t = 0).
        """
        phi0 = self.phi(0.0)
        if phi0 == 0.0:
            return
        gap = phi0 * float(np.linalg.norm(np.atleast_1d(y0) - self.reference(0.0)))
        if gap >= 1.0:
            raise ValueError(
                f"initial error outside the funnel: phi(0) |e(0)| = {gap:.6g} >= 1"
            )


class FunnelController:
    """Error feedback u = switching(gain(|w|^2)) w, w = phi (y - y_ref)."""

    def __init__(self, spec):
        self.spec = spec
        self.mode = "funnel"

    def input(self, t, y):
        spec = self.spec
        w = spec.phi(t) * (np.atleast_1d(y) - spec.reference(t))
        s = float(np.dot(w, w))
        if s >= 1.0 - GAIN_POLE_GUARD:
            raise FunnelViolation(t, 1.0 - math.sqrt(s))
        return spec.switching(spec.gain(s)) * w

    def margin(self, t, y):
        """1 - phi(t) |e(t)|; positive on every accepted step."""
        e = np.atleast_1d(y) - self.spec.reference(t)
        return 1.0 - self.spec.phi(t) * float(np.linalg.norm(e))


def funnel_input(t, y, spec):
    """Single funnel-control evaluation (see FunnelController)."""
    return FunnelController(spec).input(t, y)


class FeedforwardController:
    """Open-loop law u = y_ref'(t) + Gamma y_ref(t); no feedback."""

    def __init__(self, gamma, reference):
        self.gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        self.reference = reference
        self.mode = "feedforward"

    def input(self, t, y=None):
        return self.reference.dot(t) + self.gamma @ self.reference(t)


def feedforward_input(t, model, reference):
    return FeedforwardController(model.gamma, reference).input(t)


class OpenLoopInput:
    """Fixed input signal u(t); used for uncontrolled and randomized runs."""

    def __init__(self, fn=None, dim=1):
        self.fn = fn
        self.dim = dim
        self.mode = "open_loop"

    def input(self, t, y=None):
        if self.fn is None:
            return np.zeros(self.dim)
        return np.atleast_1d(np.asarray(self.fn(t), dtype=float))


def mean_ode_closed_loop(
    controller, model, mass, mean0, dist_mean=None, horizon=10.0, dt=1e-3
):
    """Integrate the closed-loop output ODE y' = -Gamma y + P0 g(u) + dbar.

    This low-dimensional system is the exact law of the PDE output, so it
    serves as the oracle for the full solvers.  RK4 with the controller
    evaluated at every stage; a funnel violation mid-run aborts (the
    continuous closed loop cannot leave the funnel, so a violation flags a
    too-large step or an invalid design triple).

    Returns
    -------
    (t, y, u) : ((m,), (m, n), (m, n)) ndarrays
    """
    if getattr(controller, "mode", None) == "funnel":
        if mass == 0.0:
            raise ValueError("funnel control requires nonzero initial mass")
        controller.spec.check_initial(mean0)
    gamma = model.gamma
    g = model.g
    y = np.atleast_1d(np.asarray(mean0, dtype=float)).copy()
    dim = y.shape[0]
    steps = int(round(horizon / dt))

    def rhs(t, y):
        u = controller.input(t, y)
        out = -(gamma @ y) + mass * np.atleast_1d(g(u))
        if dist_mean is not None:
            out = out + dist_mean(t)
        return out

    ts = np.empty(steps + 1)
    ys = np.empty((steps + 1, dim))
    us = np.empty((steps + 1, dim))
    t = 0.0
    for i in range(steps + 1):
        ts[i] = t
        ys[i] = y
        us[i] = controller.input(t, y)
        if i == steps:
            break
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FunnelViolation(t + dt, float("nan"))
        t = (i + 1) * dt
    return ts, ys, us


def disturbance_mean(d, t, rule):
    """First moment int x d(t, x) dx of the disturbance at time t."""
    return d.mean(t, rule)
