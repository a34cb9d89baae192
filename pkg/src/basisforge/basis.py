"""Hierarchical orthonormal bases from frozen DeepONet trunk functions.

Pipeline: sample trunk outputs at fixed times on a Gauss-Legendre grid
(:func:`freeze_trunk`), take the thin SVD of ``W^{1/2} A``
(:func:`orthonormalize`), and re-expand the node values in orthonormal
Legendre polynomials (:func:`legendre_project`) so the basis can be
evaluated and differentiated anywhere on the interval.

The main path never divides by singular values.  :func:`covariance_route`
does, and exists only as a comparison oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fileio import FormatError, read_container, write_container, write_csv
from .quadrature import (
    LegendreBasis,
    QuadratureGrid,
    legendre_differentiate,
    legendre_series,
    legendre_vander,
    weighted_gram,
)

__all__ = [
    "CandidateSet",
    "OrthonormalBasis",
    "freeze_trunk",
    "time_samples",
    "candidates_from_values",
    "orthonormalize",
    "covariance_route",
    "select_rank",
    "legendre_project",
    "basis_from_node_values",
    "fourier_basis",
    "basis_eval",
    "basis_deriv",
    "gram_deviation",
    "save_basis",
    "load_basis",
    "export_singular_values",
]

BASIS_MAGIC = b"FORGEBAS"
BASIS_VERSION = 1

_ZERO_NORM = 1e-14
_REORTHO_TOL = 1e-8


@dataclass
class CandidateSet:
    """Unit-norm candidate functions sampled at the grid nodes (M x p)."""

    values: np.ndarray
    grid: QuadratureGrid
    freeze_times: list = field(default_factory=list)
    source: str = ""

    @property
    def count(self) -> int:
        return self.values.shape[1]


def _normalize_columns(values, grid, *, warn=True):
    norms = np.sqrt(np.real(np.einsum("i,ik,ik->k", grid.weights, values, values)))
    keep = norms >= _ZERO_NORM
    if warn and not keep.all():
        warnings.warn(
            f"dropping {np.count_nonzero(~keep)} candidate column(s) with zero norm",
            RuntimeWarning,
            stacklevel=3,
        )
    return values[:, keep] / norms[keep], keep


def candidates_from_values(values, grid: QuadratureGrid, *, source="", freeze_times=()):
    """Normalize arbitrary sampled functions into a candidate set."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != grid.size:
        raise ValueError("candidate values must have one row per grid node")
    normed, _ = _normalize_columns(values, grid)
    return CandidateSet(normed, grid, list(freeze_times), source)


def time_samples(t_final: float, dt: float) -> list:
    """Freeze times 0, dt, 2dt, ..., t_final (1 + t_final/dt values)."""
    n = int(round(t_final / dt))
    if not np.isclose(n * dt, t_final, rtol=0, atol=1e-9 * max(1.0, t_final)):
        raise ValueError(f"dt={dt} does not divide the interval [0, {t_final}]")
    return [float(k * dt) for k in range(n + 1)]


def freeze_trunk(model, times, grid: QuadratureGrid, *, t_final=None) -> CandidateSet:
    """Trunk outputs at each freeze time, stacked into p = len(times) * w columns."""
    times = [float(t) for t in times]
    if not times:
        raise ValueError("at least one freeze time is required")
    t_final = model.metadata.get("t_final") if t_final is None else t_final
    for t in times:
        if t < 0 or (t_final is not None and t > t_final * (1 + 1e-12)):
            warnings.warn(
                f"freeze time {t} is outside the training interval; trunk is extrapolated",
                RuntimeWarning,
                stacklevel=2,
            )
    blocks = [model.trunk_functions(t, grid.nodes) for t in times]
    values = np.concatenate(blocks, axis=1)
    normed, _ = _normalize_columns(values, grid)
    source = str(model.metadata.get("model_id", ""))
    return CandidateSet(normed, grid, times, source)


@dataclass
class OrthonormalBasis:
    """Orthonormal functions phi_1..phi_r, hierarchically ordered.

    ``node_values`` (M x r) are the values at the grid nodes; once
    :func:`legendre_project` has run, ``legendre_coeffs`` ((L+1) x r) make
    the functions evaluable anywhere in the grid's domain.
    """

    singular_values: np.ndarray
    node_values: np.ndarray
    grid: QuadratureGrid
    threshold: float = 0.0
    legendre_coeffs: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.node_values.shape[1]

    @property
    def degree(self) -> int | None:
        return None if self.legendre_coeffs is None else self.legendre_coeffs.shape[0] - 1

    @property
    def domain(self):
        return self.grid.domain

    def truncated(self, r: int) -> "OrthonormalBasis":
        """The leading ``r`` functions."""
        if not 1 <= r <= self.rank:
            raise ValueError(f"cannot keep {r} of {self.rank} functions")
        coeffs = None if self.legendre_coeffs is None else self.legendre_coeffs[:, :r]
        meta = dict(self.metadata, truncated_to=r)
        return replace(
            self, node_values=self.node_values[:, :r], legendre_coeffs=coeffs, metadata=meta
        )


def select_rank(singular_values, threshold: float) -> int:
    """Largest r with sigma_r > threshold (sigma assumed non-increasing)."""
    s = np.asarray(singular_values)
    above = s > threshold
    r = int(np.argmin(above)) if not above.all() else s.size
    if r == 0:
        warnings.warn(
            f"no singular value exceeds the threshold {threshold:g}", RuntimeWarning, stacklevel=2
        )
    return r


def _fix_signs(U):
    # deterministic orientation: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def orthonormalize(candidates: CandidateSet, threshold: float = 0.0, *, max_rank=None):
    """SVD of ``B = W^{1/2} A``; node values are ``W^{-1/2} Q`` for retained columns.

    Columns with ``sigma_k > threshold`` are kept, optionally capped at
    ``max_rank`` (a hard count overrides nothing else).
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    grid = candidates.grid
    sqrt_w = np.sqrt(grid.weights)
    B = sqrt_w[:, None] * candidates.values
    try:
        Q, S, _ = np.linalg.svd(B, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD of the weighted candidate matrix failed: {exc}") from exc
    r = select_rank(S, threshold)
    if max_rank is not None:
        r = min(r, int(max_rank))
    Q = _fix_signs(Q[:, :r])
    meta = {
        "source": candidates.source,
        "freeze_times": list(candidates.freeze_times),
        "candidates": int(candidates.count),
    }
    return OrthonormalBasis(S, Q / sqrt_w[:, None], grid, float(threshold), None, meta)


def covariance_route(candidates: CandidateSet):
    """Comparison oracle: eigendecompose ``D = A^T W A`` and recover
    ``phi_k = sigma_k^{-1} sum_l v_lk tau_l``.

    Returns ``(sigma, node_values)``.  Accurate only to about the square root
    of machine precision relative to sigma_1, and amplifies roundoff by
    1/sigma_k; never used to build a basis.
    """
    A = candidates.values
    D = weighted_gram(A, A, candidates.grid)
    evals, V = np.linalg.eigh(D)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    V = V[:, order]
    sigma = np.sqrt(np.clip(evals, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = (A @ V) / sigma
    return sigma, phi


def legendre_project(basis: OrthonormalBasis, L: int = 127) -> OrthonormalBasis:
    """Expand each node-value column in q_0..q_L using the grid quadrature.

    If truncation spoils orthonormality by more than 1e-8, a thin QR of the
    coefficient matrix restores it (q_j are orthonormal, so the Gram matrix
    of the expansions is ``C^T C``).
    """
    grid = basis.grid
    if not 0 <= L < grid.size:
        raise ValueError(f"need 0 <= L < M={grid.size}, got L={L}")
    V = legendre_vander(grid.nodes, LegendreBasis(L, grid.domain))
    C = V.T @ (grid.weights[:, None] * basis.node_values)
    dev = float(np.max(np.abs(C.T @ C - np.eye(C.shape[1])))) if C.size else 0.0
    meta = dict(basis.metadata, L=int(L), projection_gram_deviation=dev)
    if dev > _REORTHO_TOL:
        Qc, R = np.linalg.qr(C)
        signs = np.sign(np.diag(R))
        signs[signs == 0] = 1.0
        C = Qc * signs
        meta["reorthonormalized"] = True
    return replace(basis, legendre_coeffs=C, metadata=meta)


def basis_from_node_values(values, grid: QuadratureGrid, L=127, metadata=None):
    """Wrap already-orthonormal node values as a basis (unit singular values).

    Used for analytic oracle bases; the columns are taken in the given order.
    """
    values = np.asarray(values, dtype=np.float64)
    basis = OrthonormalBasis(
        np.ones(values.shape[1]), values, grid, 0.0, None, dict(metadata or {})
    )
    return legendre_project(basis, L)


def fourier_basis(n_modes: int, grid: QuadratureGrid, L=127) -> OrthonormalBasis:
    """The trigonometric oracle basis 1, cos x, sin x, ..., cos nx, sin nx
    normalized on the grid's interval (length 2*pi expected)."""
    x = grid.nodes
    length = grid.length
    cols = [np.full_like(x, 1.0 / np.sqrt(length))]
    for k in range(1, n_modes + 1):
        cols.append(np.cos(k * x) / np.sqrt(length / 2))
        cols.append(np.sin(k * x) / np.sqrt(length / 2))
    meta = {"source": f"fourier:{n_modes}", "freeze_times": []}
    return basis_from_node_values(np.column_stack(cols), grid, L, meta)


def _require_coeffs(basis):
    if basis.legendre_coeffs is None:
        raise ValueError("basis has no Legendre coefficients; call legendre_project first")
    return basis.legendre_coeffs


def basis_eval(basis: OrthonormalBasis, points) -> np.ndarray:
    """Matrix of phi_k(points), shape (npts, r)."""
    C = _require_coeffs(basis)
    return np.atleast_2d(legendre_series(C, np.atleast_1d(points), basis.domain))


def basis_deriv(basis: OrthonormalBasis, points, order: int = 1) -> np.ndarray:
    """Matrix of d^order phi_k / dx^order at ``points`` (order 1 or 2)."""
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    C = _require_coeffs(basis)
    for _ in range(order):
        C = legendre_differentiate(C, basis.domain)
    return np.atleast_2d(legendre_series(C, np.atleast_1d(points), basis.domain))


def gram_deviation(basis: OrthonormalBasis, grid: QuadratureGrid | None = None) -> float:
    """max |<phi_j, phi_k> - delta_jk|, using ``grid`` (default: 2M-node rule)."""
    from .quadrature import gauss_legendre_rule

    grid = grid or gauss_legendre_rule(2 * basis.grid.size, basis.domain)
    Phi = basis_eval(basis, grid.nodes)
    G = weighted_gram(Phi, Phi, grid)
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def save_basis(basis: OrthonormalBasis, path):
    """Container with magic ``FORGEBAS``: singular values, Legendre
    coefficients, grid nodes/weights, and JSON metadata (threshold, domain,
    provenance)."""
    C = _require_coeffs(basis)
    meta = dict(basis.metadata)
    meta.update(threshold=basis.threshold, domain=list(basis.domain), rank=basis.rank)
    arrays = {
        "singular_values": basis.singular_values,
        "legendre_coeffs": C,
        "nodes": basis.grid.nodes,
        "weights": basis.grid.weights,
    }
    write_container(path, arrays, meta, magic=BASIS_MAGIC, version=BASIS_VERSION)


def load_basis(path) -> OrthonormalBasis:
    arrays, meta = read_container(path, magic=BASIS_MAGIC, version=BASIS_VERSION)
    missing = {"singular_values", "legendre_coeffs", "nodes", "weights"} - arrays.keys()
    if missing:
        raise FormatError(f"{path}: basis file lacks {sorted(missing)}")
    grid = QuadratureGrid(arrays["nodes"], arrays["weights"], tuple(meta["domain"]))
    C = arrays["legendre_coeffs"]
    node_values = legendre_series(C, grid.nodes, grid.domain)
    node_values = node_values.reshape(grid.size, C.shape[1])
    return OrthonormalBasis(
        arrays["singular_values"], node_values, grid, float(meta["threshold"]), C, meta
    )


def export_singular_values(path, basis: OrthonormalBasis, comments=None):
    rows = ((k + 1, float(s)) for k, s in enumerate(basis.singular_values))
    write_csv(path, ["index", "value"], rows, comments)
