import numpy as np
import pytest

from basisforge import muscl
from basisforge.reference import solve_reference


def test_minmod_cases():
    a = np.array([1.0, -1.0, 2.0, 0.5, 0.0])
    b = np.array([2.0, -3.0, -1.0, 0.25, 1.0])
    np.testing.assert_array_equal(muscl.minmod(a, b), [1.0, -1.0, 0.0, 0.25, 0.0])


def test_roe_flux_upwinding_and_sonic_fix():
    uL = np.array([1.0, -1.0, 2.0, -2.0, -1.0])
    uR = np.array([0.5, -0.5, -1.0, 1.0, 2.0])
    # right-moving, left-moving, shock (speed > 0), transonic expansions
    np.testing.assert_allclose(muscl.roe_flux(uL, uR), [0.5, 0.125, 2.0, 0.0, 0.0])


def test_constant_state_is_steady():
    np.testing.assert_array_equal(muscl.muscl_rhs(np.full(64, 0.7)), 0.0)


def test_rhs_conserves_mass():
    u = np.sin(muscl.cell_centers(128)) + 0.2 * np.cos(3 * muscl.cell_centers(128))
    assert abs(np.sum(muscl.muscl_rhs(u))) < 1e-12


def test_too_few_cells():
    with pytest.raises(ValueError):
        muscl.muscl_rhs(np.zeros(4))


def test_riemann_shock_speed():
    # periodic square wave: shock from uL=1 to uR=0 travels at 1/2
    n = 1024
    x = muscl.cell_centers(n)
    u0 = np.where((x > 1.0) & (x < 3.0), 1.0, 0.0)
    t = 1.5
    traj = solve_reference("inviscid_burgers", u0, (0, t), t)
    u = traj.states[-1]
    # locate the jump from high to low after the plateau
    front = x[np.argmin(np.diff(u))]
    expected = 3.0 + 0.5 * t
    assert abs(front - expected) / (0.5 * t) < 0.02


def test_total_variation_non_increasing():
    n = 512
    x = muscl.cell_centers(n)
    traj = solve_reference("inviscid_burgers", np.sin(x) + 0.5, (0, 2.0), 0.1)
    tv = [muscl.total_variation(u) for u in traj.states]
    assert np.all(np.diff(tv) <= 1e-8)


def test_interpolation_is_periodic_and_exact_at_centres():
    xc = muscl.cell_centers(16)
    vals = np.cos(xc)
    np.testing.assert_allclose(muscl.interpolate_periodic(vals, xc), vals)
    assert muscl.interpolate_periodic(vals, np.array([0.0]))[0] == pytest.approx(
        muscl.interpolate_periodic(vals, np.array([2 * np.pi]))[0]
    )
