"""Galerkin evolution of periodic PDEs in a custom orthonormal basis.

The solution is ``u(t, x) = sum_k a_k(t) phi_k(x)``.  Testing the PDE against
each ``phi_m`` gives ODEs for the coefficients; ``b`` of them (one per
boundary condition) are not evolved but fixed after every step so that the
expansion satisfies the periodicity constraints (a tau method).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import OrthonormalBasis, basis_deriv, basis_eval
from .quadrature import QuadratureGrid

__all__ = [
    "PDES",
    "BOUNDARY_COUNT",
    "GalerkinSystem",
    "CoefficientTrajectory",
    "TauError",
    "assemble",
    "initial_coefficients",
    "rhs",
    "tau_enforce",
    "evolve",
    "reconstruct",
    "relative_error",
    "averaged_error",
]

log = logging.getLogger(__name__)

PDES = ("advection", "advection_diffusion", "viscous_burgers", "inviscid_burgers")
BOUNDARY_COUNT = {
    "advection": 1,
    "inviscid_burgers": 1,
    "advection_diffusion": 2,
    "viscous_burgers": 2,
}

_COND_LIMIT = 1e12
# constraint rows smaller than this describe an already-periodic basis
_VACUOUS_ROW = 1e-9


class TauError(RuntimeError):
    """The boundary constraints cannot be solved for any admissible columns."""


@dataclass
class GalerkinSystem:
    pde: str
    nu: float
    D1: np.ndarray | None
    D2: np.ndarray | None
    T: np.ndarray | None
    boundary: np.ndarray  # (b, r)
    tau_columns: np.ndarray  # indices fixed by the constraints
    metadata: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.boundary.shape[1]

    @property
    def b(self) -> int:
        return self.boundary.shape[0]

    @property
    def evolved(self) -> np.ndarray:
        mask = np.ones(self.r, dtype=bool)
        mask[self.tau_columns] = False
        return np.flatnonzero(mask)


def _choose_tau_columns(G, b):
    r = G.shape[1]
    scale = np.linalg.norm(G, 2)
    meta = {}
    if scale < _VACUOUS_ROW:
        meta["tau_vacuous"] = True
        return np.arange(r - b, r), meta

    def rel_cond(cols):
        s = np.linalg.svd(G[:, cols], compute_uv=False)
        return np.inf if s[-1] == 0 else scale / s[-1]

    default = np.arange(r - b, r)
    if rel_cond(default) < _COND_LIMIT:
        return default, meta
    pool = range(r - min(2 * b, r), r)
    best = min(itertools.combinations(pool, b), key=lambda c: rel_cond(list(c)))
    best = np.array(best)
    cond = rel_cond(best)
    meta.update(tau_pivoted=True, tau_condition=float(cond))
    if cond >= _COND_LIMIT:
        meta["tau_singular"] = True
    log.info("tau columns pivoted to %s (condition %.2e)", best.tolist(), cond)
    return best, meta


def assemble(
    basis: OrthonormalBasis,
    pde: str,
    nu: float = 0.0,
    grid: QuadratureGrid | None = None,
    b: int | None = None,
) -> GalerkinSystem:
    """Precompute the inner products the coefficient ODEs need.

    ``D1[m, k] = <phi_m, phi_k'>``, ``D2[m, k] = <phi_m, phi_k''>`` and
    ``T[m, k, l] = <phi_m, phi_k phi_l'>``, all by quadrature on ``grid``
    (default: the basis grid).  Boundary rows are ``phi_k(a) - phi_k(b)``
    and, for second-order problems, ``phi_k'(a) - phi_k'(b)``.
    """
    if pde not in PDES:
        raise ValueError(f"unknown PDE {pde!r}")
    if nu < 0:
        raise ValueError("viscosity must be non-negative")
    grid = grid or basis.grid
    b = BOUNDARY_COUNT[pde] if b is None else b
    r = basis.rank
    if r <= b:
        raise ValueError(f"need more basis functions ({r}) than boundary conditions ({b})")

    x, w = grid.nodes, grid.weights
    Phi = basis_eval(basis, x)
    dPhi = basis_deriv(basis, x, 1)
    WPhi = w[:, None] * Phi
    D1 = WPhi.T @ dPhi
    D2 = None
    if pde in ("advection_diffusion", "viscous_burgers"):
        D2 = WPhi.T @ basis_deriv(basis, x, 2)
    T = None
    if pde in ("viscous_burgers", "inviscid_burgers"):
        T = np.einsum("im,ik,il->mkl", WPhi, Phi, dPhi, optimize=True)

    lo, hi = basis.domain
    ends = np.array([lo, hi])
    rows = [np.diff(basis_eval(basis, ends)[::-1], axis=0)[0]]
    if b >= 2:
        rows.append(np.diff(basis_deriv(basis, ends, 1)[::-1], axis=0)[0])
    G = np.array(rows[:b])
    cols, meta = _choose_tau_columns(G, b)
    meta.update(quadrature_nodes=int(grid.size))
    return GalerkinSystem(pde, float(nu), D1, D2, T, G, cols, meta)


def tau_enforce(system: GalerkinSystem, a) -> np.ndarray:
    """Overwrite the tau coefficients so every boundary row annihilates ``a``."""
    a = np.array(a, dtype=np.float64, copy=True)
    G = system.boundary
    residual = G @ a
    if np.max(np.abs(residual)) <= 1e-14 * max(1.0, np.max(np.abs(a))):
        return a
    if system.metadata.get("tau_vacuous"):
        return a
    if system.metadata.get("tau_singular"):
        raise TauError("boundary constraint block is singular for every admissible column set")
    cols = system.tau_columns
    keep = system.evolved
    a[cols] = np.linalg.solve(G[:, cols], -G[:, keep] @ a[keep])
    return a


def rhs(system: GalerkinSystem, a) -> np.ndarray:
    """Time derivative of the evolved coefficients (length r - b)."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite Galerkin state")
    rows = system.evolved
    out = np.zeros(rows.size)
    if system.D1 is not None and system.pde in ("advection", "advection_diffusion"):
        out -= system.D1[rows] @ a
    if system.D2 is not None:
        out += system.nu * (system.D2[rows] @ a)
    if system.T is not None:
        out -= (system.T[rows] @ a) @ a
    return out


def _operator(system):
    """Closure returning full-length derivatives with zeros in tau slots."""
    rows = system.evolved
    r = system.r
    L = np.zeros((rows.size, r))
    if system.pde in ("advection", "advection_diffusion"):
        L -= system.D1[rows]
    if system.D2 is not None:
        L += system.nu * system.D2[rows]
    T = None if system.T is None else -system.T[rows]

    def f(a):
        out = np.zeros(r)
        val = L @ a
        if T is not None:
            val += (T @ a) @ a
        out[rows] = val
        return out

    return f


def initial_coefficients(u0_values, basis: OrthonormalBasis, system=None, grid=None):
    """``a_m(0) = <phi_m, u0>`` by quadrature, then one tau correction."""
    grid = grid or basis.grid
    u0 = np.asarray(u0_values, dtype=np.float64)
    if u0.shape != (grid.size,):
        raise ValueError("initial values must be sampled at the grid nodes")
    a = basis_eval(basis, grid.nodes).T @ (grid.weights * u0)
    return tau_enforce(system, a) if system is not None else a


@dataclass
class CoefficientTrajectory:
    times: np.ndarray
    coefficients: np.ndarray  # (n_saved, r)
    energy: np.ndarray  # sum_k a_k^2 at every step
    energy_times: np.ndarray
    blowup: bool = False
    blowup_time: float | None = None
    reason: str = ""


def evolve(
    system: GalerkinSystem,
    a0,
    dt: float,
    T_final: float,
    guard: float = 1.025,
    *,
    record_every: int = 1,
    per_stage_tau: bool = False,
) -> CoefficientTrajectory:
    """Classical RK4 with fixed step ``dt`` on the evolved coefficients.

    Tau constraints are re-imposed after each step (or after each stage with
    ``per_stage_tau``).  Integration stops early when the coefficient energy
    exceeds ``guard`` times its initial value, or the state stops being finite.
    """
    if dt <= 0 or T_final <= 0:
        raise ValueError("dt and T_final must be positive")
    f = _operator(system)
    fix = (lambda v: tau_enforce(system, v)) if per_stage_tau else (lambda v: v)
    n_steps = int(round(T_final / dt))
    a = np.array(a0, dtype=np.float64)
    e0 = float(a @ a)
    times, coeffs = [0.0], [a.copy()]
    energy = np.empty(n_steps + 1)
    energy[0] = e0
    blowup, when, reason = False, None, ""
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            k1 = f(a)
            k2 = f(fix(a + 0.5 * dt * k1))
            k3 = f(fix(a + 0.5 * dt * k2))
            k4 = f(fix(a + dt * k3))
            a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = step * dt
            if not np.all(np.isfinite(a)):
                blowup, when, reason = True, t, "non-finite state"
                done = step - 1
                break
            a = tau_enforce(system, a)
            e = float(a @ a)
            energy[step] = e
            done = step
            if step % record_every == 0 or step == n_steps:
                times.append(t)
                coeffs.append(a.copy())
            if e > guard * e0:
                blowup, when, reason = True, t, f"energy exceeded {guard:g} x initial"
                if times[-1] != t:
                    times.append(t)
                    coeffs.append(a.copy())
                break
    return CoefficientTrajectory(
        np.array(times),
        np.array(coeffs),
        energy[: done + 1],
        dt * np.arange(done + 1),
        blowup,
        when,
        reason,
    )


def reconstruct(basis: OrthonormalBasis, coefficients, points) -> np.ndarray:
    """``u(x) = sum_k a_k phi_k(x)`` for one or many coefficient vectors."""
    Phi = basis_eval(basis, points)
    return np.asarray(coefficients) @ Phi.T


def relative_error(u_custom, u_ref) -> float:
    """``||u_custom - u_ref||_2 / ||u_ref||_2`` over the sample points."""
    u_custom = np.asarray(u_custom, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    denom = np.linalg.norm(u_ref)
    if denom == 0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(u_custom - u_ref) / denom)


def averaged_error(series, times) -> float:
    """Time average of an error series by the trapezoidal rule."""
    series = np.asarray(series, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        return float(series[0]) if series.size else float("nan")
    return float(np.trapezoid(series, times) / (times[-1] - times[0]))
