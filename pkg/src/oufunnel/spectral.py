"""Spectral coefficient solver.

The density is carried as the truncated coefficient vector beta of its
expansion in the orthonormal weighted Hermite basis.  The coefficient ODE

    beta_a' = -c lam_a beta_a
              + sum_j sqrt(2 a_j) (g(u)^T u_j) beta_{a - e_j}
              + <d(t), w_a>

couples each index only to its lowerings, so the truncated system is closed
without any closure approximation, and the first- and second-order moment
subsystems are exact at every truncation order.  Time integration is
classical RK4 with the control input re-evaluated at every stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverAbort
from .model import SeparableDisturbance

__all__ = [
    "SpectralState",
    "check_time_step",
    "project_initial",
    "rhs",
    "step",
    "reconstruct",
    "moments",
    "state_mean",
]

#: RK4 absolute stability interval on the negative real axis.
RK4_STABILITY = 2.785


@dataclass
class SpectralState:
    """Coefficient vector beta at time t, tied to its basis ordering."""

    basis: object
    t: float
    coef: np.ndarray

    def hnorm(self):
        """Weighted-space norm ||p|| = sqrt(sum beta^2) (Parseval)."""
        return float(np.linalg.norm(self.coef))

    def tail_fraction(self):
        """Share of sum beta^2 sitting on the top-degree shell |a| = k.

        Reported as a truncation diagnostic; no error bound in k is
        asserted anywhere.
        """
        top = [i for i, a in enumerate(self.basis.indices) if sum(a) == self.basis.order]
        total = float(np.sum(self.coef**2))
        if total == 0.0:
            return 0.0
        return float(np.sum(self.coef[top] ** 2)) / total


def check_time_step(basis, model, dt):
    """Reject dt outside the RK4 stability region of the stiffest mode.

    The fastest decay rate is c * max lam_a; stability needs
    dt * c * lam_max <= 2.785.
    """
    lam_max = float(np.max(basis.eigenvalues))
    if lam_max > 0 and dt * model.c * lam_max > RK4_STABILITY:
        raise ValueError(
            f"dt={dt:g} unstable for the stiffest basis mode "
            f"(c lam_max = {model.c * lam_max:g}); use dt <= "
            f"{RK4_STABILITY / (model.c * lam_max):.3e}"
        )


def project_initial(p0, basis, rule=None):
    """Project an initial density onto the basis: beta_a = <p0, w_a>.

    Densities with a ``spectral_coefficients`` hook (all built-ins) use
    their own polynomial-exact rule; anything else is integrated with the
    model quadrature rule.  Either way the weighted inner product reduces to
    int p0(x) H_a(x) dx / c_a because the exp(+-phi) factors cancel.
    """
    if hasattr(p0, "spectral_coefficients"):
        coef = np.asarray(p0.spectral_coefficients(basis), dtype=float)
    else:
        if rule is None:
            raise ValueError("generic densities need a quadrature rule")
        values = np.asarray(p0(rule.xnodes), dtype=float)
        weighted = rule.physical_weights * values * np.exp(
            basis.model.phi(rule.xnodes)
        )
        if not np.all(np.isfinite(weighted)):
            raise ValueError(
                "projection quadrature is not finite; the density is not in "
                "the weighted state space numerically"
            )
        coef = basis.eval_weighted(rule.xnodes) @ weighted
    if not np.all(np.isfinite(coef)):
        raise ValueError("initial projection produced non-finite coefficients")
    return SpectralState(basis, 0.0, coef)


def _rhs_array(basis, model, coef, u, dist_vec):
    """Coefficient derivative for a raw beta array (hot path)."""
    out = -model.c * basis.eigenvalues * coef
    gu = np.atleast_1d(model.g(u))
    coupling = model.axes @ gu  # component j is g(u)^T u_j
    for j in range(basis.dim):
        rows = basis.lower_rows[j]
        out[rows] += coupling[j] * basis.lower_scale[j] * coef[basis.lower_src[j]]
    if dist_vec is not None:
        out = out + dist_vec
    return out


def rhs(state, u, d, model, rule=None):
    """Coefficient derivative at the state's time under input u.

    Lowerings through zero contribute nothing; the disturbance enters
    through its basis projection <d(t), w_a>.
    """
    dist_vec = None
    if d is not None and not d.is_zero:
        dist_vec = d.projection(state.t, state.basis, rule)
    return _rhs_array(state.basis, model, state.coef, np.atleast_1d(u), dist_vec)


def state_mean(basis, model, coef):
    """Output (mean) vector read off the first-order coefficients."""
    mu1 = basis.norms[basis.first_pos] * coef[basis.first_pos]
    return 0.5 * (model.axes_inv @ mu1)


def step(state, controller, d, model, dt, rule=None):
    """Advance one RK4 step of the closed loop.

    The input is re-evaluated at each stage from the stage state's mean.
    For disturbances without a separable fast path the projection is
    computed at the step endpoints and linearly interpolated at the interior
    stages (the projection quadrature dominates the cost and d is smooth in
    time here).
    """
    basis, coef, t = state.basis, state.coef, state.t

    if d is None or d.is_zero:
        dist_at = lambda s: None
    elif isinstance(d, SeparableDisturbance):
        spatial = d.spatial_projection(basis)
        dist_at = lambda s: d.time_factor(s) * spatial
    else:
        p0 = d.projection(t, basis, rule)
        p1 = d.projection(t + dt, basis, rule)
        dist_at = lambda s: p0 + (s - t) / dt * (p1 - p0)

    def f(s, beta):
        u = controller.input(s, state_mean(basis, model, beta))
        return _rhs_array(basis, model, beta, u, dist_at(s))

    k1 = f(t, coef)
    k2 = f(t + 0.5 * dt, coef + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, coef + 0.5 * dt * k2)
    k4 = f(t + dt, coef + dt * k3)
    new = coef + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise SolverAbort(t + dt, "(coefficient vector)")
    return SpectralState(basis, t + dt, new)


def reconstruct(state, points):
    """Density values p(t, x) = sum_a beta_a w_a(x) at the given points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return state.basis.eval_weighted(points).T @ state.coef


def moments(state, model):
    """(mass, mean, covariance) read off the low-order coefficients.

    mass = c_0 beta_0; the mean comes from the first-order coefficients via
    the inverse axes map; the covariance assembles the second-order
    coefficient matrix with the 2 P0 I correction before the same map.
    Needs truncation order >= 2 for the covariance.
    """
    basis = state.basis
    if basis.order < 2:
        raise ValueError("covariance needs truncation order >= 2")
    coef = state.coef
    mass = float(basis.norms[0] * coef[0])
    mu1 = basis.norms[basis.first_pos] * coef[basis.first_pos]
    mean = 0.5 * (model.axes_inv @ mu1)

    n = basis.dim
    second = np.empty((n, n))
    for j in range(n):
        for l in range(n):
            pos = basis.second_pos[j, l]
            second[j, l] = basis.norms[pos] * coef[pos]
    # diagonal entries load H_2 modes, off-diagonal the mixed H_1 x H_1 modes
    mat = second + 2.0 * mass * np.eye(n) - np.outer(mu1, mu1)
    cov = 0.25 * model.axes_inv @ mat @ model.axes_inv.T
    return mass, mean, cov
