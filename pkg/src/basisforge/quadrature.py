"""Gauss-Legendre quadrature and orthonormal Legendre polynomials on an interval.

Everything downstream (basis extraction, projections, Galerkin assembly) uses
the discrete inner product defined here, so all arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

__all__ = [
    "TWO_PI",
    "QuadratureGrid",
    "LegendreBasis",
    "gauss_legendre_rule",
    "discrete_inner_product",
    "weighted_gram",
    "legendre_eval",
    "legendre_vander",
    "legendre_differentiate",
    "legendre_series",
]

TWO_PI = 2.0 * np.pi

_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-15


def _check_domain(domain):
    a, b = (float(v) for v in domain)
    if not a < b:
        raise ValueError(f"degenerate quadrature domain ({a}, {b}): need a < b")
    return a, b


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive weights of an M-point rule on ``domain``."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple[float, float] = (0.0, TWO_PI)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "domain", _check_domain(self.domain))

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def integrate(self, values):
        """Quadrature sum over the leading axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def _legendre_and_derivative(n, x):
    """P_n(x) and P_n'(x) on [-1, 1] by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre_rule(M: int, domain=(0.0, TWO_PI)) -> QuadratureGrid:
    """M-point Gauss-Legendre rule mapped affinely onto ``domain``.

    Roots of P_M are found by Newton iteration started from the Tricomi
    asymptotic guesses; weights are ``2 / ((1 - x^2) P_M'(x)^2)`` before
    scaling.  The rule is exact for polynomials of degree ``2M - 1``.
    """
    M = int(M)
    if M < 1:
        raise ValueError(f"need at least one quadrature node, got M={M}")
    a, b = _check_domain(domain)

    i = np.arange(1, M + 1)
    x = np.cos(np.pi * (i - 0.25) / (M + 0.5))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = _legendre_and_derivative(M, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    x = np.sort(x)
    # enforce the exact reflection symmetry of the roots
    x = 0.5 * (x - x[::-1])
    _, dp = _legendre_and_derivative(M, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    weights = half * w
    return QuadratureGrid(nodes, weights, (a, b))


def discrete_inner_product(h1, h2, grid: QuadratureGrid):
    """``sum_i conj(h1_i) w_i h2_i``: the quadrature approximation of <h1, h2>."""
    h1 = np.asarray(h1)
    h2 = np.asarray(h2)
    if h1.shape != (grid.size,) or h2.shape != (grid.size,):
        raise ValueError(
            f"expected vectors of length {grid.size}, got {h1.shape} and {h2.shape}"
        )
    return np.sum(np.conj(h1) * grid.weights * h2)


def weighted_gram(A, B, grid: QuadratureGrid):
    """Matrix of pairwise inner products ``A^H W B`` between column sets."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[0] != grid.size or B.shape[0] != grid.size:
        raise ValueError("column sets must be sampled on the grid nodes")
    return np.conj(A).T @ (grid.weights[:, None] * B)


@dataclass(frozen=True)
class LegendreBasis:
    """Orthonormal shifted Legendre polynomials q_0..q_L on ``domain``."""

    max_degree: int
    domain: tuple[float, float] = field(default=(0.0, TWO_PI))

    def __post_init__(self):
        if self.max_degree < 0:
            raise ValueError("max_degree must be non-negative")
        object.__setattr__(self, "domain", _check_domain(self.domain))

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def scales(self, degrees=None) -> np.ndarray:
        """Factors sqrt((2j+1)/(b-a)) turning P_j into unit-norm q_j."""
        j = np.arange(self.max_degree + 1) if degrees is None else np.asarray(degrees)
        return np.sqrt((2.0 * j + 1.0) / self.length)

    def to_reference(self, points, *, slack=1e-12) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        a, b = self.domain
        tol = slack * (b - a)
        if points.size and (points.min() < a - tol or points.max() > b + tol):
            raise ValueError(
                f"points outside the domain [{a}, {b}]: "
                f"range [{points.min()}, {points.max()}]"
            )
        s = (2.0 * points - (a + b)) / (b - a)
        return np.clip(s, -1.0, 1.0)


def legendre_vander(points, basis: LegendreBasis) -> np.ndarray:
    """Matrix ``V[i, j] = q_j(points[i])`` for j = 0..L."""
    s = basis.to_reference(points)
    L = basis.max_degree
    V = np.empty(s.shape + (L + 1,))
    V[..., 0] = 1.0
    if L >= 1:
        V[..., 1] = s
    for k in range(1, L):
        V[..., k + 1] = ((2 * k + 1) * s * V[..., k] - k * V[..., k - 1]) / (k + 1)
    return V * basis.scales()


def legendre_eval(j: int, points, basis: LegendreBasis) -> np.ndarray:
    """Values of the unit-norm Legendre polynomial of degree ``j``."""
    if not 0 <= j <= basis.max_degree:
        raise ValueError(f"degree {j} outside 0..{basis.max_degree}")
    s = basis.to_reference(points)
    p_prev = np.ones_like(s)
    p = s
    if j == 0:
        p = p_prev
    for k in range(1, j):
        p_prev, p = p, ((2 * k + 1) * s * p - k * p_prev) / (k + 1)
    return p * basis.scales([j])[0]


def legendre_differentiate(coeffs, domain=(0.0, TWO_PI)) -> np.ndarray:
    """Orthonormal-Legendre coefficients of the derivative of an expansion.

    ``coeffs`` may be a vector or a (L+1, ncols) matrix.  Applying the map
    twice yields second-derivative coefficients.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    n = c.shape[0]
    basis = LegendreBasis(max(n - 1, 0), domain)
    scale = basis.scales()
    shape = (-1,) + (1,) * (c.ndim - 1)
    a = c * scale.reshape(shape)  # coefficients of the standard P_j
    d = np.zeros_like(a)
    # d_{k-1} = (2k-1) (a_k + d_{k+1} / (2k+3)), downward from the top degree
    for k in range(n - 1, 0, -1):
        upper = d[k + 1] / (2 * k + 3) if k + 1 < n else 0.0
        d[k - 1] = (2 * k - 1) * (a[k] + upper)
    d *= 2.0 / basis.length
    return d / scale.reshape(shape)


def legendre_series(coeffs, points, domain=(0.0, TWO_PI)) -> np.ndarray:
    """Evaluate ``sum_j coeffs[j, k] q_j(x)`` at ``points``.

    Returns shape ``points.shape + coeffs.shape[1:]``.  Uses the Clenshaw
    recurrence on standard Legendre coefficients.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    basis = LegendreBasis(c.shape[0] - 1, domain)
    s = basis.to_reference(points)
    shape = (-1,) + (1,) * (c.ndim - 1)
    std = c * basis.scales().reshape(shape)
    out = npleg.legval(s, std, tensor=True)
    if c.ndim == 1:
        return out
    # legval puts the column axes first
    return np.moveaxis(out, -1, 0) if out.ndim == 2 else out
