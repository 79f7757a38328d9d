"""Built-in initial densities.

Each density is evaluable on batches of points and knows its own mass and
first moment in closed form.  Built-ins also implement
``spectral_coefficients(basis)`` with an integration rule that is exact for
polynomials (per-piece Gauss-Legendre for the piecewise-constant densities,
scaled Gauss-Hermite for the Gaussian ones), which is what makes projecting
a discontinuous box profile onto a degree-40 basis reliable.  Densities
without that hook are projected by the model's generic quadrature rule.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "PiecewiseUniform",
    "GaussianDensity",
    "StationaryDensity",
    "GenericDensity",
    "initial_density",
]


class PiecewiseUniform:
    """Uniform density on a union of disjoint intervals (1-d only).

    By default the height is chosen so the total mass is one; pass `height`
    to override (e.g. to build signed or non-normalized profiles).
    """

    def __init__(self, pieces, height=None):
        pieces = [(float(a), float(b)) for a, b in pieces]
        if not pieces or any(b <= a for a, b in pieces):
            raise ValueError(f"invalid pieces {pieces!r}")
        pieces.sort()
        for (_, b0), (a1, _) in zip(pieces, pieces[1:]):
            if a1 < b0:
                raise ValueError("pieces must be disjoint")
        self.pieces = pieces
        total = sum(b - a for a, b in pieces)
        self.height = float(height) if height is not None else 1.0 / total

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != 1:
            raise ValueError("piecewise-uniform densities are 1-d")
        vals = np.zeros(x.shape[0])
        for a, b in self.pieces:
            vals += np.where((x[:, 0] >= a) & (x[:, 0] <= b), self.height, 0.0)
        return vals

    def mass(self):
        return self.height * sum(b - a for a, b in self.pieces)

    def mean(self):
        m1 = self.height * sum(0.5 * (b * b - a * a) for a, b in self.pieces)
        return np.array([m1])

    def second_moment(self):
        return self.height * sum((b**3 - a**3) / 3.0 for a, b in self.pieces)

    def spectral_coefficients(self, basis):
        """Exact projection: per-piece Gauss-Legendre against the basis."""
        if basis.dim != 1:
            raise ValueError("piecewise-uniform densities are 1-d")
        m = basis.order // 2 + 2  # exact through degree 2m-1 >= order
        z, w = np.polynomial.legendre.leggauss(m)
        xs, ws = [], []
        for a, b in self.pieces:
            xs.append(0.5 * (a + b) + 0.5 * (b - a) * z)
            ws.append(0.5 * (b - a) * w * self.height)
        points = np.concatenate(xs)[:, None]
        weights = np.concatenate(ws)
        # H_a / c_a = exp(phi) w_a is the bare polynomial being integrated
        tables = basis.eval_weighted(points)
        return tables @ (weights * np.exp(basis.model.phi(points)))

    def cell_averages(self, grid):
        """Average over cells [x - h/2, x + h/2] of a uniform 1-d grid.

        The right way to put a discontinuous profile on a finite-difference
        grid: overlap fractions keep the discrete mass exact regardless of
        where the jumps fall relative to the nodes.
        """
        grid = np.asarray(grid, dtype=float)
        h = grid[1] - grid[0]
        lo, hi = grid - 0.5 * h, grid + 0.5 * h
        vals = np.zeros_like(grid)
        for a, b in self.pieces:
            overlap = np.minimum(hi, b) - np.maximum(lo, a)
            vals += self.height * np.clip(overlap, 0.0, None) / h
        return vals


class GaussianDensity:
    """Gaussian with diagonal covariance, optionally scaled.

    `scale` multiplies the whole profile (mass = scale); scale = 0 gives the
    zero density, useful for exercising the mass-zero rejection paths.
    """

    def __init__(self, mean, var, scale=1.0):
        self.mu = np.atleast_1d(np.asarray(mean, dtype=float))
        var = np.asarray(var, dtype=float)
        self.var = np.full(self.mu.shape, float(var)) if var.ndim == 0 else var
        if self.var.shape != self.mu.shape or np.any(self.var <= 0):
            raise ValueError("variance must be positive and match the mean shape")
        self.scale = float(scale)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        quad = np.sum((x - self.mu) ** 2 / (2.0 * self.var), axis=1)
        norm = np.prod(np.sqrt(2.0 * math.pi * self.var))
        return self.scale * np.exp(-quad) / norm

    def mass(self):
        return self.scale

    def mean(self):
        return self.scale * self.mu

    def _check_in_state_space(self, model):
        # p0 in the weighted space needs exp(phi) p0^2 integrable, i.e.
        # diag(1/var) - Gamma / (2 c) positive definite.
        mat = np.diag(1.0 / self.var) - model.gamma / (2.0 * model.c)
        eig = np.linalg.eigvalsh(mat)
        if eig[0] <= 0:
            raise ValueError(
                f"gaussian density with var {self.var!r} is too wide for the "
                f"weighted state space of this model (margin {eig[0]:.3g})"
            )

    def spectral_coefficients(self, basis):
        """Exact projection via Gauss-Hermite at the density's own scale."""
        model = basis.model
        self._check_in_state_space(model)
        m = basis.order // 2 + 6
        z, w = np.polynomial.hermite.hermgauss(m)
        grids = np.meshgrid(*([z] * basis.dim), indexing="ij")
        znodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(
            [g.ravel() for g in np.meshgrid(*([w] * basis.dim), indexing="ij")],
            axis=0,
        )
        xnodes = self.mu + np.sqrt(2.0 * self.var) * znodes
        tables = basis.eval_weighted(xnodes)
        poly = weights * np.exp(basis.model.phi(xnodes))
        return self.scale * (tables @ poly) / math.pi ** (basis.dim / 2.0)

    def cell_averages(self, grid):
        return self(np.asarray(grid)[:, None])


class StationaryDensity:
    """The model's stationary density exp(-phi)/Z (mass one, mean zero)."""

    def __init__(self, model):
        self.model = model

    def __call__(self, x):
        vals = np.exp(-self.model.phi(x)) / self.model.stationary_normalizer()
        return vals

    def mass(self):
        return 1.0

    def mean(self):
        return np.zeros(self.model.dim)

    def spectral_coefficients(self, basis):
        # exp(-phi)/Z is c0 w_0 / Z with Z = c0^2, so the only coefficient is
        # 1/c0; asserted against quadrature in the test suite.
        beta = np.zeros(basis.size)
        beta[0] = 1.0 / basis.norms[0]
        return beta

    def cell_averages(self, grid):
        return self(np.asarray(grid)[:, None])


class GenericDensity:
    """Wrap an arbitrary evaluable density; projected by generic quadrature."""

    def __init__(self, fn, mass=None, mean=None):
        self.fn = fn
        self._mass = mass
        self._mean = mean

    def __call__(self, x):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(x, dtype=float))))

    def mass(self):
        if self._mass is None:
            raise ValueError("generic density has no declared mass")
        return self._mass

    def mean(self):
        if self._mean is None:
            raise ValueError("generic density has no declared mean")
        return np.atleast_1d(np.asarray(self._mean, dtype=float))

    def cell_averages(self, grid):
        return self(np.asarray(grid)[:, None])


def initial_density(spec, model):
    """Build a named initial density from a config block.

    Built-ins: ``two_box`` (any number of intervals via `edges`, normalized
    to mass one unless `height` is given), ``gaussian`` (mean, var, scale)
    and ``stationary``.
    """
    name = spec.get("name")
    params = {k: v for k, v in spec.items() if k != "name"}
    if name == "two_box":
        return PiecewiseUniform(params["edges"], params.get("height"))
    if name == "gaussian":
        return GaussianDensity(
            params.get("mean", np.zeros(model.dim)),
            params.get("var", 1.0),
            params.get("scale", 1.0),
        )
    if name == "stationary":
        return StationaryDensity(model)
    raise ValueError(
        f"unknown initial density {name!r}; "
        "built-ins: ['two_box', 'gaussian', 'stationary']"
    )
