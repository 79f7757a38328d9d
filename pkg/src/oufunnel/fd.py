"""Finite-difference reference solver (1-d).

Method-of-lines discretization of

    p_t = d/dx ( c p_x + p (Gamma x - g(u)) ) + d(t, x)

on a truncated interval [-L, L] with artificial Dirichlet values p = 0 at
both ends.  The diffusion term uses the central second difference and the
drift term central differences of the conservative flux, which keeps the
scheme second order and conserves the trapezoidal mass up to boundary flux
(negligible here: the density decays like exp(-phi) with phi(+-L) huge).
Time integration is RK4 under an explicit-scheme step-size gate.

This solver is deliberately independent of the spectral machinery; the pair
is used for twin-solver cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverAbort

_trapezoid = getattr(np, "trapezoid", np.trapz)

__all__ = [
    "GridState",
    "make_grid_state",
    "cfl_limit",
    "check_fd_time_step",
    "fd_rhs",
    "fd_step",
    "fd_moments",
]

#: explicit-step safety factor applied to the diffusion limit h^2 / (2c).
CFL_SAFETY = 0.9


@dataclass
class GridState:
    """Density samples on a uniform grid; boundary entries pinned to zero."""

    x: np.ndarray
    p: np.ndarray
    t: float

    @property
    def h(self):
        return float(self.x[1] - self.x[0])


def make_grid_state(density, half_width, points, t=0.0):
    """Sample an initial density on the grid (cell averages where available)."""
    x = np.linspace(-half_width, half_width, points)
    if hasattr(density, "cell_averages"):
        p = np.asarray(density.cell_averages(x), dtype=float)
    else:
        p = np.asarray(density(x[:, None]), dtype=float)
    p = p.copy()
    p[0] = 0.0
    p[-1] = 0.0
    return GridState(x, p, t)


def cfl_limit(model, h):
    """Largest admissible step h^2 / (2c) * safety for the explicit scheme."""
    return CFL_SAFETY * h * h / (2.0 * model.c)


def check_fd_time_step(model, h, dt):
    limit = cfl_limit(model, h)
    if dt > limit:
        raise ValueError(
            f"dt={dt:g} violates the explicit step bound {limit:.3e} "
            f"for h={h:.3e}; use dt <= {limit:.3e}"
        )


def _rhs_arrays(p, drift, c, h, gu, d_vals, out):
    """Interior-node derivative; boundaries held at zero."""
    flux = p * (drift - gu)
    out[1:-1] = (
        c * (p[2:] - 2.0 * p[1:-1] + p[:-2]) / (h * h)
        + (flux[2:] - flux[:-2]) / (2.0 * h)
    )
    if d_vals is not None:
        out[1:-1] += d_vals[1:-1]
    out[0] = 0.0
    out[-1] = 0.0
    return out


def fd_rhs(state, u, d, model):
    """Semi-discrete right-hand side at the state's time under input u."""
    if model.dim != 1:
        raise ValueError("the finite-difference solver is 1-d only")
    drift = model.gamma[0, 0] * state.x
    gu = float(np.atleast_1d(model.g(np.atleast_1d(u)))[0])
    d_vals = None
    if d is not None and not d.is_zero:
        d_vals = d(state.t, state.x[:, None])
    out = np.empty_like(state.p)
    return _rhs_arrays(state.p, drift, model.c, state.h, gu, d_vals, out)


def fd_step(state, controller, d, model, dt):
    """One closed-loop RK4 step; the output y(p) feeds the controller per stage."""
    check_fd_time_step(model, state.h, dt)
    x, p, t, h = state.x, state.p, state.t, state.h
    drift = model.gamma[0, 0] * x
    d_vals_at = _disturbance_sampler(d, x)

    def f(s, pp):
        y = _trapz_mean(x, pp, h)
        u = controller.input(s, np.array([y]))
        gu = float(np.atleast_1d(model.g(u))[0])
        return _rhs_arrays(pp, drift, model.c, h, gu, d_vals_at(s), np.empty_like(pp))

    k1 = f(t, p)
    k2 = f(t + 0.5 * dt, p + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, p + 0.5 * dt * k2)
    k4 = f(t + dt, p + dt * k3)
    new = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise SolverAbort(t + dt, "(grid values)")
    return GridState(x, new, t + dt)


def _trapz_mean(x, p, h):
    return float(_trapezoid(x * p, dx=h))


def _disturbance_sampler(d, x):
    """Grid samples of d(t, .) as a function of t, with a separable fast path."""
    if d is None or d.is_zero:
        return lambda s: None
    if hasattr(d, "time_factor") and hasattr(d, "profile"):
        prof = np.asarray(d.profile(x[:, None]), dtype=float)
        return lambda s: d.time_factor(s) * prof
    return lambda s: d(s, x[:, None])


def fd_moments(state):
    """(mass, mean, variance) by trapezoidal quadrature over the grid."""
    h = state.h
    mass = float(_trapezoid(state.p, dx=h))
    mean = float(_trapezoid(state.x * state.p, dx=h))
    var = float(_trapezoid((state.x - mean) ** 2 * state.p, dx=h))
    return mass, mean, var
