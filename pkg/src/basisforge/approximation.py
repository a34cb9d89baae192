"""Approximation quality of a basis: projections, coefficient decay and a
Legendre-based upper bound on the projection error.

For any smooth f and any r_leg, the projection error satisfies

    ||f - Pf|| <= sqrt(sum_{j > r_leg} <q_j, f>^2)
                  + sum_{j <= r_leg} |<q_j, f>| * ||q_j - P q_j||

where q_j are the orthonormal Legendre polynomials and P the orthogonal
projection onto the basis span.  :func:`ac3_bound` evaluates both terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import OrthonormalBasis, basis_eval
from .fileio import write_csv
from .quadrature import (
    LegendreBasis,
    QuadratureGrid,
    gauss_legendre_rule,
    legendre_vander,
)

__all__ = [
    "TARGETS",
    "ApproxReport",
    "project",
    "legendre_coefficients",
    "legendre_error_profile",
    "ac3_bound",
    "coefficient_decay_fit",
    "write_bound_csv",
    "write_profile_csv",
    "write_decay_csv",
]

TARGETS = {
    "f1": ("exp(cos(x/2))", lambda x: np.exp(np.cos(x / 2))),
    "f2": ("exp(sin(x))", lambda x: np.exp(np.sin(x))),
    "f3": ("exp(sin(2x))", lambda x: np.exp(np.sin(2 * x))),
}


def _basis_on(basis: OrthonormalBasis, grid: QuadratureGrid):
    if basis.legendre_coeffs is not None:
        return basis_eval(basis, grid.nodes)
    if grid is not basis.grid:
        raise ValueError("basis without Legendre coefficients only lives on its own grid")
    return basis.node_values


def project(f_values, basis: OrthonormalBasis, grid: QuadratureGrid | None = None):
    """Coefficients ``a_k = <phi_k, f>`` and the residual norm ``||f - Pf||``.

    ``f_values`` are samples at the nodes of ``grid`` (default: the basis grid).
    """
    grid = grid or basis.grid
    f = np.asarray(f_values, dtype=np.float64)
    if f.shape != (grid.size,):
        raise ValueError(f"f must be sampled at the {grid.size} grid nodes")
    Phi = _basis_on(basis, grid)
    a = Phi.T @ (grid.weights * f)
    resid = f - Phi @ a
    return a, float(np.sqrt(np.sum(grid.weights * resid * resid)))


def legendre_coefficients(f_values, grid: QuadratureGrid, max_degree: int) -> np.ndarray:
    """``<q_j, f>`` for j = 0..max_degree by quadrature."""
    V = legendre_vander(grid.nodes, LegendreBasis(max_degree, grid.domain))
    return V.T @ (grid.weights * np.asarray(f_values, dtype=np.float64))


def legendre_error_profile(basis: OrthonormalBasis, j_max: int) -> np.ndarray:
    """``||q_j - P q_j||`` for j = 0..j_max.

    Because the basis is a Legendre expansion, ``<phi_k, q_j>`` is the
    coefficient matrix entry, and ``||q_j - P q_j||^2 = 1 - sum_k C_jk^2``.
    Degrees beyond the expansion are orthogonal to the span (error 1).
    """
    C = basis.legendre_coeffs
    if C is None:
        raise ValueError("basis has no Legendre coefficients")
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    captured = np.zeros(j_max + 1)
    n = min(j_max + 1, C.shape[0])
    captured[:n] = np.sum(C[:n] ** 2, axis=1)
    return np.sqrt(np.clip(1.0 - captured, 0.0, None))


@dataclass
class ApproxReport:
    target: str
    coefficients: np.ndarray
    projection_error: float
    tail: float
    damped_sum: float
    bound: float
    r_leg: int
    terms: np.ndarray  # |<q_j, f>| * ||q_j - P q_j||, j = 0..r_leg
    legendre: np.ndarray  # <q_j, f>, j = 0..max computed degree
    profile: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.projection_error <= self.bound + 1e-9

    def cumulative(self):
        """Rows (j, tail_j, term_j, bound_j) where bound_j uses r_leg = j."""
        suffix = np.cumsum((self.legendre**2)[::-1])[::-1]
        tails = np.sqrt(np.append(suffix[1:], 0.0))
        running = np.cumsum(self.terms)
        return [
            (j, float(tails[j]), float(self.terms[j]), float(tails[j] + running[j]))
            for j in range(self.r_leg + 1)
        ]


def ac3_bound(
    f,
    basis: OrthonormalBasis,
    r_leg: int,
    *,
    target="f",
    grid: QuadratureGrid | None = None,
    max_degree: int | None = None,
) -> ApproxReport:
    """Both terms of the Legendre upper bound and the actual projection error.

    ``f`` is a callable.  Legendre coefficients of f are computed up to
    ``max_degree`` (default: grid size - 1) on ``grid`` (default: a
    1024-node rule, or twice the basis grid if larger); choose them so the
    coefficients beyond are negligible.
    """
    L = basis.degree
    if L is None:
        raise ValueError("basis has no Legendre coefficients")
    if not 0 <= r_leg < L:
        raise ValueError(f"r_leg must lie in [0, {L - 1}], got {r_leg}")
    if grid is None:
        grid = gauss_legendre_rule(max(1024, 2 * basis.grid.size), basis.domain)
    max_degree = grid.size - 1 if max_degree is None else max_degree
    fx = f(grid.nodes)
    a, err = project(fx, basis, grid)
    c = legendre_coefficients(fx, grid, max_degree)
    profile = legendre_error_profile(basis, r_leg)
    tail = float(np.sqrt(np.sum(c[r_leg + 1 :] ** 2)))
    terms = np.abs(c[: r_leg + 1]) * profile
    damped = float(np.sum(terms))
    report = ApproxReport(
        target, a, err, tail, damped, tail + damped, r_leg, terms, c, profile
    )
    if not report.holds:
        raise AssertionError(
            f"projection error {err:.3e} exceeds the bound {report.bound:.3e} for {target}"
        )
    return report


def coefficient_decay_fit(coeffs, *, floor=1e-13):
    """Least-squares fit ``log|a_k| ~ log C - k log rho`` over entries above ``floor``.

    Returns ``(rho, C, r_squared)``.
    """
    a = np.abs(np.asarray(coeffs, dtype=np.float64))
    k = np.arange(1, a.size + 1)
    keep = a > floor
    y = np.log(a[keep])
    X = np.column_stack([np.ones(keep.sum()), k[keep]])
    sol, *_ = np.linalg.lstsq(X, y, rcond=None)
    fit = X @ sol
    ss_res = np.sum((y - fit) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(-sol[1])), float(np.exp(sol[0])), float(r2)


def write_bound_csv(path, report: ApproxReport, comments=None):
    write_csv(path, ["j", "tail", "term", "cumulative_bound"], report.cumulative(), comments)


def write_profile_csv(path, profile, comments=None):
    write_csv(path, ["degree", "value"], ((j, float(v)) for j, v in enumerate(profile)), comments)


def write_decay_csv(path, coeffs, comments=None):
    rows = ((k + 1, float(abs(v))) for k, v in enumerate(coeffs))
    write_csv(path, ["degree", "value"], rows, comments)
