"""Problem data for the controlled Ornstein-Uhlenbeck Fokker-Planck equation.

An :class:`OuModel` bundles the diffusion constant c, the symmetric positive
definite drift matrix Gamma and the input nonlinearity g, together with the
spectral factors derived from Gamma that every other module consumes: the
orthonormal eigenvectors V, the scaled rates lam_k = eig_k / c, the axis
vectors u_k = sqrt(lam_k/2) v_k and the inverse-axes matrix used to map
first/second basis coefficients to means and covariances.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "jacobi_eigh",
    "OuModel",
    "build_model",
    "phi_eval",
    "stationary_density",
    "Nonlinearity",
    "nonlinearity",
    "Disturbance",
    "SeparableDisturbance",
    "disturbance",
]

#: seed of the deterministic sample grid used to spot-check the declared
#: linear bound of a nonlinearity (10^4 points in the ball |v| <= 100).
GBAR_SEED = 0x0F01
GBAR_SAMPLES = 10_000
GBAR_RADIUS = 100.0


def jacobi_eigh(mat, tol=1e-13, max_sweeps=60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps the strict upper triangle in fixed row-major order until the
    off-diagonal Frobenius norm drops below `tol`, so the result is
    reproducible across runs.  Eigenvalues are returned ascending; each
    eigenvector's sign is fixed by making its largest-magnitude entry
    positive (first such index on ties).

    Returns
    -------
    (eigvals, eigvecs) : ((n,) ndarray, (n, n) ndarray)
        ``mat @ eigvecs[:, i] == eigvals[i] * eigvecs[:, i]``.
    """
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    vecs = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2) * 2.0))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < tol / (n * n):
                    continue
                theta = 0.5 * math.atan2(2.0 * apq, a[q, q] - a[p, p])
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                vecs = vecs @ rot
    else:
        raise RuntimeError("Jacobi iteration failed to converge")

    order = np.argsort(np.diag(a), kind="stable")
    eigvals = np.diag(a)[order]
    eigvecs = vecs[:, order]
    for i in range(n):
        col = eigvecs[:, i]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            eigvecs[:, i] = -col
    return eigvals, eigvecs


class OuModel:
    """Immutable problem data plus derived spectral factors.

    Attributes
    ----------
    c : float
        Diffusion constant (diffusion matrix is c * I).
    gamma : (n, n) ndarray
        Symmetric positive definite drift matrix.
    dim : int
    eigvals : (n,) ndarray
        Eigenvalues of gamma, ascending.
    eigvecs : (n, n) ndarray
        Orthonormal eigenvectors (columns), deterministic sign convention.
    rates : (n,) ndarray
        lam_k = eigvals_k / c; the generator decays mode a at
        c * sum_k a_k lam_k.
    axis_scales : (n,) ndarray
        sqrt(lam_k / 2); diagonal of the scaling in y = (scales) V^T x.
    axes : (n, n) ndarray
        Rows are u_k^T with u_k = axis_scales_k * v_k, so y = axes @ x.
    axes_inv : (n, n) ndarray
        Inverse of ``axes``; maps first-order coefficient data to means.
    g : Nonlinearity
        Input nonlinearity applied inside the drift.
    """

    def __init__(self, c, gamma, g="identity"):
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if not (isinstance(c, (int, float)) and c > 0):
            raise ValueError(f"diffusion constant must be positive, got {c!r}")
        if gamma.shape[0] != gamma.shape[1]:
            raise ValueError(f"drift matrix must be square, got {gamma.shape}")
        asym = float(np.max(np.abs(gamma - gamma.T))) if gamma.size else 0.0
        if asym > 1e-12:
            raise ValueError(f"drift matrix not symmetric (max asymmetry {asym:.2e})")

        self.c = float(c)
        self.gamma = 0.5 * (gamma + gamma.T)
        self.dim = gamma.shape[0]

        eigvals, eigvecs = jacobi_eigh(self.gamma)
        bad = eigvals <= 0
        if np.any(bad):
            raise ValueError(
                f"drift matrix not positive definite: eigenvalue {eigvals[bad][0]:.6g}"
            )
        self.eigvals = eigvals
        self.eigvecs = eigvecs
        self.rates = eigvals / self.c
        self.axis_scales = np.sqrt(self.rates / 2.0)
        self.axes = self.axis_scales[:, None] * eigvecs.T
        self.axes_inv = eigvecs * (1.0 / self.axis_scales)[None, :]
        self.g = g if isinstance(g, Nonlinearity) else nonlinearity(g)

    def to_axis_coords(self, x):
        """Map points (m, n) or (n,) to axis coordinates y_k = u_k^T x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.axes.T

    def phi(self, x):
        """Quadratic exponent of the stationary envelope, (1/2c) x^T Gamma x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.einsum("ij,jk,ik->i", x, self.gamma, x) / (2.0 * self.c)

    def stationary_normalizer(self):
        """Z = int exp(-phi) dx, in closed form (Gaussian integral)."""
        return math.pi ** (self.dim / 2.0) / float(np.prod(self.axis_scales))

    def drift_at(self, x):
        """Gamma @ x for points of shape (m, n)."""
        return np.atleast_2d(np.asarray(x, dtype=float)) @ self.gamma.T


def build_model(c, gamma, g="identity"):
    """Validate (c, Gamma, g) and derive the spectral factors."""
    return OuModel(c, gamma, g)


def phi_eval(model, x):
    """(1/2c) x^T Gamma x; scalar for a single point, 1-d array otherwise."""
    vals = model.phi(x)
    return float(vals[0]) if vals.size == 1 else vals


def stationary_density(model, x):
    """Normalized stationary density exp(-phi(x)) / Z.

    This is the Gaussian with covariance c * Gamma^{-1}, the long-time limit
    of every mass-one solution.
    """
    vals = np.exp(-model.phi(x)) / model.stationary_normalizer()
    return float(vals[0]) if vals.size == 1 else vals


class Nonlinearity:
    """Input nonlinearity g with a declared linear bound.

    ``high_gain`` records whether g is *claimed* to satisfy the unbounded
    gain condition that funnel feasibility rests on; the condition involves
    a supremum over all of R and is an assumption attached to the choice of
    g, not something checked numerically.  Of the built-ins, ``identity``
    satisfies it while ``saturating`` does not (it is bounded) and is only
    suitable for feedforward or open-loop experiments.
    """

    def __init__(self, name, fn, gbar, high_gain):
        self.name = name
        self.fn = fn
        self.gbar = float(gbar)
        self.high_gain = bool(high_gain)

    def __call__(self, v):
        return self.fn(np.asarray(v, dtype=float))

    def verify_linear_bound(self, dim, tol=1e-9):
        """Check |g(v)| <= gbar |v| on the deterministic sample ball.

        Raises ValueError on the first violating sample.
        """
        rng = np.random.default_rng(GBAR_SEED)
        v = rng.normal(size=(GBAR_SAMPLES, dim))
        radii = rng.uniform(0.0, GBAR_RADIUS, size=GBAR_SAMPLES)
        norms = np.linalg.norm(v, axis=1)
        v *= (radii / np.where(norms == 0, 1.0, norms))[:, None]
        gv = np.apply_along_axis(self.fn, 1, v)
        lhs = np.linalg.norm(np.atleast_2d(gv), axis=1)
        rhs = self.gbar * np.linalg.norm(v, axis=1) + tol
        bad = lhs > rhs
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(
                f"nonlinearity {self.name!r} violates its linear bound at "
                f"v={v[i]!r}: |g(v)|={lhs[i]:.6g} > {rhs[i]:.6g}"
            )


def _saturating(v):
    return v / math.sqrt(1.0 + float(np.dot(v, v)))


_NONLINEARITIES = {
    "identity": lambda: Nonlinearity("identity", lambda v: v, 1.0, True),
    "saturating": lambda: Nonlinearity("saturating", _saturating, 1.0, False),
}


def nonlinearity(name):
    """Look up a built-in nonlinearity by name."""
    try:
        return _NONLINEARITIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown nonlinearity {name!r}; built-ins: {sorted(_NONLINEARITIES)}"
        ) from None


class Disturbance:
    """Additive disturbance d(t, x), evaluable on batches of points.

    ``zero_mass`` is the declared property int d(t, x) dx = 0; when set it is
    spot-checked by :meth:`verify_zero_mass` and the spectral projection onto
    the constant mode is forced to vanish analytically for the built-ins.
    """

    def __init__(self, fn, zero_mass, name="custom"):
        self.fn = fn
        self.zero_mass = bool(zero_mass)
        self.name = name

    def __call__(self, t, x):
        return self.fn(t, np.atleast_2d(np.asarray(x, dtype=float)))

    @property
    def is_zero(self):
        return False

    def verify_zero_mass(self, rule, times, tol=1e-8):
        """Quadrature check of the declared zero-mass property at sample times."""
        if not self.zero_mass:
            return
        for t in times:
            total = rule.integrate_x(self(t, rule.xnodes))
            if not math.isfinite(total) or abs(total) > tol:
                raise ValueError(
                    f"disturbance {self.name!r} declared zero-mass but "
                    f"integrates to {total:.3e} at t={t}"
                )

    def projection(self, t, basis, rule):
        """Coefficients <d(t), w_a> for all basis indices, by quadrature."""
        values = self(t, rule.xnodes)
        tables = basis.eval_weighted(rule.xnodes)
        # <d, w_a> = int exp(phi) d w_a dx and w_a carries exp(-phi), so the
        # weight cancels: this is int d(t,x) H_a(x) dx / c_a.
        weighted = rule.physical_weights * values * np.exp(
            basis.model.phi(rule.xnodes)
        )
        return tables @ weighted

    def mean(self, t, rule):
        """First moment int x d(t, x) dx as an (n,) vector."""
        values = self(t, rule.xnodes)
        out = np.array(
            [rule.integrate_x(rule.xnodes[:, k] * values) for k in range(rule.model.dim)]
        )
        if not np.all(np.isfinite(out)):
            raise ValueError("disturbance first moment is not finite")
        return out


class _ZeroDisturbance(Disturbance):
    def __init__(self):
        super().__init__(lambda t, x: np.zeros(x.shape[0]), True, "zero")

    @property
    def is_zero(self):
        return True

    def projection(self, t, basis, rule=None):
        return np.zeros(basis.size)

    def mean(self, t, rule=None):
        return np.zeros(rule.model.dim if rule is not None else 1)


class SeparableDisturbance(Disturbance):
    """d(t, x) = time_factor(t) * profile(x) with a Gaussian-envelope profile.

    The spatial profile is poly(x) * exp(-decay |x|^2), so its projections
    onto the basis and its first moment are one-off Gauss-Hermite integrals
    at the profile's own scale (exact for the polynomial part); the time
    factor multiplies them at every evaluation.  This makes the per-step
    disturbance cost of the spectral solver a single vector scale.
    """

    def __init__(self, time_factor, profile, decay, zero_mass, name):
        self.time_factor = time_factor
        self.profile = profile
        self.decay = float(decay)
        self._spatial_cache = {}
        super().__init__(
            lambda t, x: time_factor(t) * profile(x), zero_mass, name
        )

    def _gauss_nodes(self, dim, points):
        z, w = np.polynomial.hermite.hermgauss(points)
        grids = np.meshgrid(*([z] * dim), indexing="ij")
        znodes = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*([w] * dim), indexing="ij")
        weights = np.prod([g.ravel() for g in wgrids], axis=0)
        return znodes, weights

    def spatial_projection(self, basis):
        """int profile(x) H_a(x) dx / c_a for all a, cached per basis."""
        key = id(basis)
        if key not in self._spatial_cache:
            dim = basis.dim
            znodes, weights = self._gauss_nodes(dim, basis.order + 6)
            scale = math.sqrt(self.decay)
            xnodes = znodes / scale
            # profile = poly * exp(-decay |x|^2); divide the envelope out so
            # the Gauss-Hermite rule in z = scale * x sees the bare polynomial
            bare = self.profile(xnodes) * np.exp(np.sum(znodes**2, axis=1))
            tables = basis.eval_weighted(xnodes)
            weighted = (
                weights * bare * np.exp(basis.model.phi(xnodes)) / scale**dim
            )
            vec = tables @ weighted
            if self.zero_mass:
                vec[0] = 0.0
            self._spatial_cache[key] = vec
        return self._spatial_cache[key]

    def projection(self, t, basis, rule=None):
        return self.time_factor(t) * self.spatial_projection(basis)

    def spatial_mean(self, dim):
        znodes, weights = self._gauss_nodes(dim, 24)
        scale = math.sqrt(self.decay)
        xnodes = znodes / scale
        bare = self.profile(xnodes) * np.exp(np.sum(znodes**2, axis=1))
        return np.array(
            [np.sum(weights * xnodes[:, k] * bare) for k in range(dim)]
        ) / scale**dim

    def mean(self, t, rule):
        return self.time_factor(t) * self.spatial_mean(rule.model.dim)


def disturbance(name, **params):
    """Build a named disturbance.

    Built-ins
    ---------
    zero
        No disturbance.
    cosine_odd_gaussian
        d(t, x) = amplitude * cos(frequency t) * x_1 * exp(-decay |x|^2);
        odd in x_1, hence zero mass.  Parameters: amplitude, frequency,
        decay (all floats).
    """
    if name == "zero":
        return _ZeroDisturbance()
    if name == "cosine_odd_gaussian":
        amp = float(params.get("amplitude", 1.0))
        freq = float(params.get("frequency", 1.0))
        decay = float(params.get("decay", 1.0))
        zero_mass = bool(params.get("zero_mass", True))
        return SeparableDisturbance(
            lambda t: amp * math.cos(freq * t),
            lambda x: np.atleast_2d(x)[:, 0] * np.exp(-decay * np.sum(np.atleast_2d(x) ** 2, axis=1)),
            decay,
            zero_mass,
            "cosine_odd_gaussian",
        )
    raise ValueError(
        f"unknown disturbance {name!r}; built-ins: ['zero', 'cosine_odd_gaussian']"
    )
