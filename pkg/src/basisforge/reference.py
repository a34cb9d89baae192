"""Ground-truth trajectories for the four periodic test problems.

Advection, advection-diffusion and viscous Burgers are solved with the
Fourier-Galerkin right-hand sides and Dormand-Prince 5(4); inviscid Burgers
with MUSCL finite volumes and Bogacki-Shampine 3(2).  Saved states are real
values on a uniform grid (Fourier: the M collocation points ``2*pi*j/M``;
MUSCL: cell averages), so both kinds share one trajectory layout.
"""

from __future__ import annotations

import numpy as np

from . import fourier, muscl
from .fileio import read_container, write_container, write_csv
from .integrators import Trajectory, adaptive_rk
from .quadrature import TWO_PI

__all__ = [
    "ALL_PDES",
    "LINEAR_PDES",
    "solve_reference",
    "evaluate_reference",
    "grid_points",
    "save_trajectory",
    "load_trajectory",
    "export_trajectory_csv",
]

LINEAR_PDES = ("advection", "advection_diffusion")
ALL_PDES = ("advection", "advection_diffusion", "viscous_burgers", "inviscid_burgers")

FOURIER_TOLERANCES = (1e-10, 1e-14)
MUSCL_TOLERANCES = (1e-6, 1e-8)


def default_save_every(pde: str) -> float:
    return 1e-3 if pde in LINEAR_PDES else 1e-4


def grid_points(scheme: str, n: int) -> np.ndarray:
    """Spatial locations of the saved state entries."""
    if scheme == "fourier":
        return TWO_PI * np.arange(n) / n
    return muscl.cell_centers(n)


def solve_reference(
    pde: str,
    u0,
    tspan,
    save_every=None,
    nu: float = 0.0,
    *,
    rtol=None,
    atol=None,
    save_times=None,
) -> Trajectory:
    """Integrate ``pde`` from uniform-grid initial values ``u0``.

    States are saved every ``save_every`` (default 1e-3 for the linear
    problems, 1e-4 otherwise) or at the explicit ``save_times``.
    """
    if pde not in ALL_PDES:
        raise ValueError(f"unknown PDE {pde!r}")
    u0 = np.asarray(u0, dtype=np.float64)
    save_every = default_save_every(pde) if save_every is None else save_every

    if pde == "inviscid_burgers":
        rtol = MUSCL_TOLERANCES[0] if rtol is None else rtol
        atol = MUSCL_TOLERANCES[1] if atol is None else atol
        traj = adaptive_rk(
            lambda t, u: muscl.muscl_rhs(u),
            u0,
            tspan,
            rtol,
            atol,
            "bogacki_shampine_32",
            save_every,
            save_times=save_times,
        )
        scheme = "muscl"
    else:
        rtol = FOURIER_TOLERANCES[0] if rtol is None else rtol
        atol = FOURIER_TOLERANCES[1] if atol is None else atol
        modes = fourier.to_modes(u0)
        traj = adaptive_rk(
            lambda t, a: fourier.fourier_rhs(pde, a, nu),
            modes,
            tspan,
            rtol,
            atol,
            "dormand_prince_45",
            save_every,
            save_times=save_times,
        )
        traj.states = fourier.to_values(traj.states)
        scheme = "fourier"
    traj.metadata.update(
        pde=pde, nu=float(nu), scheme=scheme, n=int(u0.size), rtol=rtol, atol=atol
    )
    return traj


def evaluate_reference(traj: Trajectory, row, x) -> np.ndarray:
    """Reference solution at arbitrary points ``x`` for saved row(s) ``row``.

    Fourier states are summed as series; MUSCL states are interpolated
    linearly between cell centres.
    """
    states = traj.states[row]
    if traj.metadata.get("scheme") == "muscl":
        return muscl.interpolate_periodic(states, x)
    return fourier.eval_modes(fourier.to_modes(states), x)


def save_trajectory(path, traj: Trajectory, extra_meta=None):
    meta = dict(traj.metadata)
    meta.update(extra_meta or {})
    write_container(path, {"times": traj.times, "states": traj.states}, meta)


def load_trajectory(path) -> Trajectory:
    arrays, meta = read_container(path)
    return Trajectory(arrays["times"], arrays["states"], meta)


def export_trajectory_csv(path, traj: Trajectory, comments=None):
    n = traj.states.shape[1]
    header = ["t"] + [f"x_{i}" for i in range(n)]
    rows = (np.concatenate([[t], s]) for t, s in zip(traj.times, traj.states))
    write_csv(path, header, ([float(v) for v in r] for r in rows), comments)
