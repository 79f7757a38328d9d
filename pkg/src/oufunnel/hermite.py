"""Multi-index Hermite basis machinery.

Physicists' Hermite polynomials H_n, their tensorized multi-index variants
H_a(x) = prod_k H_{a_k}(u_k^T x) built on the axes u_k of an OU model, the
weighted eigenfunctions z_a = exp(-phi) H_a, eigenvalues, normalization
constants and Gauss-Hermite quadrature.  Everything here is immutable after
construction and safe to share between solver instances.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

__all__ = [
    "hermite_eval",
    "hermite_eval_all",
    "hermite_orthogonality",
    "eigenfunction_eval",
    "multi_indices",
    "lower_index",
    "QuadratureRule",
    "build_rule",
    "BasisTable",
    "build_basis",
]

#: hard cap on the spatial dimension; the tensor basis growth beyond this is
#: combinatorial and out of scope.
MAX_DIM = 3


def hermite_eval(degree, x):
    """Evaluate the physicists' Hermite polynomial H_degree at x.

    Uses the stable three-term recurrence
    ``H_{n+1}(x) = 2 x H_n(x) - 2 n H_{n-1}(x)``; x may be a scalar or an
    ndarray.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    x = np.asarray(x, dtype=float)
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    for n in range(degree):
        h, h_prev = 2.0 * x * h - 2.0 * n * h_prev, h
    return h if h.ndim else float(h)


def hermite_eval_all(max_degree, x):
    """Return the table ``[H_0(x), ..., H_max_degree(x)]``.

    x is an ndarray of shape (m,); the result has shape (max_degree+1, m).
    One recurrence pass, shared by basis evaluation and quadrature checks.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = 2.0 * x
    for n in range(1, max_degree):
        out[n + 1] = 2.0 * x * out[n] - 2.0 * n * out[n - 1]
    return out


def hermite_orthogonality(i, j, rule):
    """Quadrature value of ``int exp(-x^2) H_i(x) H_j(x) dx``.

    The rule must integrate polynomials of degree i + j exactly, i.e.
    ``2 m - 1 >= i + j`` for an m-point rule; closed form is
    ``sqrt(pi) 2^i i!`` for i == j and 0 otherwise.
    """
    m = len(rule.nodes_1d)
    if 2 * m - 1 < i + j:
        raise ValueError(
            f"{m}-point rule is exact only up to degree {2 * m - 1}, "
            f"need {i + j}"
        )
    hi = hermite_eval(i, rule.nodes_1d)
    hj = hermite_eval(j, rule.nodes_1d)
    return float(np.sum(rule.weights_1d * hi * hj))


def multi_indices(dim, order):
    """All multi-indices a in N_0^dim with |a| <= order, graded lexicographic.

    Graded lexicographic (total degree first, then lexicographic) gives a
    deterministic serialization order for coefficient vectors.
    """
    idx = [a for a in product(range(order + 1), repeat=dim) if sum(a) <= order]
    idx.sort(key=lambda a: (sum(a), a))
    return idx


def lower_index(alpha, axis):
    """The multi-index with entry `axis` decremented, or None at zero.

    Coefficients attached to a lowering through zero are defined as 0 by the
    coefficient ODE, so callers treat None as "contribution vanishes".
    """
    if alpha[axis] == 0:
        return None
    lowered = list(alpha)
    lowered[axis] -= 1
    return tuple(lowered)


class QuadratureRule:
    """Tensorized Gauss-Hermite rule in the model's axis coordinates.

    Per axis an m-point rule with weight exp(-y^2); tensorized after the
    substitution y_k = u_k^T x.  Two integration paths are exposed:

    * ``integrate_gauss``   for int exp(-|y|^2) f(y) dy   (exact for
      polynomials f up to degree 2m-1 per axis),
    * ``integrate_x``       for int f(x) dx over R^n, for integrands with
      Gaussian decay, using the modified weights w * exp(y^2).
    """

    def __init__(self, model, points_per_axis):
        if points_per_axis < 1:
            raise ValueError("points_per_axis must be >= 1")
        self.model = model
        self.points_per_axis = points_per_axis
        nodes, weights = np.polynomial.hermite.hermgauss(points_per_axis)
        self.nodes_1d = nodes
        self.weights_1d = weights
        n = model.dim
        grids = np.meshgrid(*([nodes] * n), indexing="ij")
        self.ynodes = np.stack([g.ravel() for g in grids], axis=-1)  # (M, n)
        wgrids = np.meshgrid(*([weights] * n), indexing="ij")
        self.weights = np.prod([g.ravel() for g in wgrids], axis=0)
        # x = V R^{-1} y inverts y = R V^T x; |det| of the map x -> y is det R
        self.xnodes = self.ynodes @ np.linalg.inv(model.axes).T
        det_axes = float(np.prod(model.axis_scales))
        self.physical_weights = (
            self.weights * np.exp(np.sum(self.ynodes**2, axis=1)) / det_axes
        )

    def integrate_gauss(self, values):
        """Sum w_i * values_i, approximating int exp(-|y|^2) f(y) dy."""
        return float(np.dot(self.weights, values))

    def integrate_x(self, f):
        """Approximate int f(x) dx for f evaluable at the mapped x nodes.

        f may be a callable taking an (M, n) array, or an array of values
        already evaluated at ``xnodes``.  Only accurate for integrands with
        at least Gaussian decay in the model metric.
        """
        values = f(self.xnodes) if callable(f) else np.asarray(f)
        return float(np.dot(self.physical_weights, values))


def build_rule(model, points_per_axis):
    """Construct a QuadratureRule for the model (see class docstring)."""
    return QuadratureRule(model, points_per_axis)


def eigenfunction_eval(alpha, x, model):
    """Evaluate z_a(x) = exp(-phi(x)) * prod_k H_{a_k}(u_k^T x).

    These are the (unnormalized) eigenfunctions of the Fokker-Planck
    generator in the weighted space; x has shape (n,) or (m, n).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = model.to_axis_coords(x)
    vals = np.exp(-model.phi(x))
    for k, deg in enumerate(alpha):
        if deg:
            vals = vals * hermite_eval(deg, y[:, k])
    return vals if vals.size > 1 else float(vals[0])


class BasisTable:
    """Truncated multi-index Hermite basis with precomputed lookups.

    Attributes
    ----------
    dim, order : int
        Spatial dimension n and truncation order k (all |a| <= k).
    indices : list of tuple
        Multi-indices in graded lexicographic order.
    eigenvalues : (M,) ndarray
        lam_a = sum_k a_k lam_k.
    log_norms, norms : (M,) ndarray
        log c_a and c_a where c_a = ||exp(-phi) H_a|| in the weighted space;
        stored in log form since c_a overflows for large |a|.
    lowered : (M, n) int ndarray
        Position of the index with entry j decremented, -1 where a_j = 0.
    lower_coef : (M, n) ndarray
        The coupling factors sqrt(2 a_j) of the coefficient ODE.
    """

    def __init__(self, model, order):
        if order < 0:
            raise ValueError("truncation order must be >= 0")
        n = model.dim
        if n > MAX_DIM:
            raise ValueError(f"tensor bases with dim > {MAX_DIM} not supported")
        self.model = model
        self.dim = n
        self.order = order
        self.indices = multi_indices(n, order)
        self.size = len(self.indices)
        self.index_of = {a: i for i, a in enumerate(self.indices)}

        rates = model.rates
        alphas = np.array(self.indices, dtype=float)  # (M, n)
        self.eigenvalues = alphas @ rates

        # c_a^2 = prod_k sqrt(pi) 2^{a_k} a_k! / sqrt(lam_k / 2): the 1D
        # orthogonality constant per axis times the Jacobian of y = R V^T x.
        log_axis = np.array(
            [
                [
                    0.5 * math.log(math.pi)
                    + a * math.log(2.0)
                    + math.lgamma(a + 1.0)
                    - 0.5 * math.log(rates[k] / 2.0)
                    for k, a in enumerate(alpha)
                ]
                for alpha in self.indices
            ]
        )
        self.log_norms = 0.5 * np.sum(log_axis, axis=1)
        self.norms = np.exp(self.log_norms)

        self.lowered = np.full((self.size, n), -1, dtype=np.intp)
        self.lower_coef = np.zeros((self.size, n))
        for i, alpha in enumerate(self.indices):
            for j in range(n):
                low = lower_index(alpha, j)
                if low is not None:
                    self.lowered[i, j] = self.index_of[low]
                    self.lower_coef[i, j] = math.sqrt(2.0 * alpha[j])

        # flat per-axis views of the lowering map, precomputed for the
        # coefficient ODE inner loop
        self.lower_rows = []
        self.lower_src = []
        self.lower_scale = []
        for j in range(n):
            rows = np.nonzero(self.lowered[:, j] >= 0)[0]
            self.lower_rows.append(rows)
            self.lower_src.append(self.lowered[rows, j])
            self.lower_scale.append(self.lower_coef[rows, j])

        # positions of the first- and second-order indices used by moments
        unit = lambda j: tuple(int(i == j) for i in range(n))
        self.first_pos = None
        self.second_pos = None
        if order >= 1:
            self.first_pos = np.array(
                [self.index_of[unit(j)] for j in range(n)], dtype=np.intp
            )
        if order >= 2:
            self.second_pos = np.empty((n, n), dtype=np.intp)
            for j in range(n):
                for l in range(n):
                    a = list(unit(j))
                    a[l] += 1
                    self.second_pos[j, l] = self.index_of[tuple(a)]

    def norm_ratio(self, i, j):
        """c_i / c_j computed in log space (safe for large orders)."""
        return math.exp(self.log_norms[i] - self.log_norms[j])

    def eval_weighted(self, points):
        """Matrix of orthonormal basis values w_a(x) = z_a(x) / c_a.

        points has shape (m, n); returns shape (size, m).  Used by density
        reconstruction and Gram-matrix validation.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        y = self.model.to_axis_coords(points)
        tables = [hermite_eval_all(self.order, y[:, k]) for k in range(self.dim)]
        envelope = np.exp(-self.model.phi(points))
        out = np.empty((self.size, points.shape[0]))
        for i, alpha in enumerate(self.indices):
            vals = envelope.copy()
            for k, deg in enumerate(alpha):
                if deg:
                    vals *= tables[k][deg]
            out[i] = vals / self.norms[i]
        return out


def build_basis(model, order):
    """Build the truncated basis table for the model.

    The normalization constants use the closed form per axis; the identity
    ``2 a_j c_{a-e_j}^2 = c_a^2`` and eigenvalue additivity hold by
    construction and are asserted by the test suite against quadrature.
    """
    return BasisTable(model, order)
