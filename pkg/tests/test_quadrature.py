import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from basisforge.quadrature import (
    TWO_PI,
    LegendreBasis,
    discrete_inner_product,
    gauss_legendre_rule,
    legendre_differentiate,
    legendre_eval,
    legendre_series,
    legendre_vander,
    weighted_gram,
)


@pytest.mark.parametrize("M", [1, 2, 5, 8, 33, 64])
def test_nodes_match_numpy_reference(M):
    x_ref, w_ref = npleg.leggauss(M)
    grid = gauss_legendre_rule(M, (-1.0, 1.0))
    np.testing.assert_allclose(grid.nodes, x_ref, atol=1e-14)
    # the numpy reference itself carries ~1e-15 absolute error
    np.testing.assert_allclose(grid.weights, w_ref, rtol=0, atol=1e-14)


@pytest.mark.parametrize("M", [2, 8, 64])
def test_exact_for_monomials_up_to_2m_minus_1(M):
    # integral of ((x - pi)/pi)^k over [0, 2pi] = 2pi/(k+1) for even k, 0 otherwise
    grid = gauss_legendre_rule(M)
    for k in range(2 * M):
        val = grid.integrate(((grid.nodes - np.pi) / np.pi) ** k)
        exact = TWO_PI / (k + 1) if k % 2 == 0 else 0.0
        assert abs(val - exact) <= 1e-11 * max(1.0, abs(exact))


def test_weights_positive_sum_to_length_and_symmetric():
    grid = gauss_legendre_rule(101, (1.0, 4.0))
    assert np.all(grid.weights > 0)
    assert grid.weights.sum() == pytest.approx(3.0, rel=1e-14)
    np.testing.assert_allclose(grid.nodes + grid.nodes[::-1], 5.0, atol=1e-13)
    np.testing.assert_allclose(grid.weights, grid.weights[::-1], rtol=1e-12)


def test_grid_is_immutable():
    grid = gauss_legendre_rule(4)
    with pytest.raises(ValueError):
        grid.nodes[0] = 1.0


@pytest.mark.parametrize("bad", [0, -3])
def test_rejects_nonpositive_size(bad):
    with pytest.raises(ValueError):
        gauss_legendre_rule(bad)


def test_rejects_degenerate_domain():
    with pytest.raises(ValueError):
        gauss_legendre_rule(4, (1.0, 1.0))


def test_inner_product_of_trig_functions(grid256):
    x = grid256.nodes
    assert discrete_inner_product(np.sin(x), np.sin(x), grid256) == pytest.approx(np.pi, rel=1e-13)
    assert abs(discrete_inner_product(np.sin(x), np.cos(3 * x), grid256)) < 1e-13


def test_inner_product_shape_mismatch(grid256):
    with pytest.raises(ValueError):
        discrete_inner_product(np.ones(3), np.ones(256), grid256)


def test_legendre_gram_is_identity():
    grid = gauss_legendre_rule(1024)
    V = legendre_vander(grid.nodes, LegendreBasis(127))
    G = weighted_gram(V, V, grid)
    assert np.max(np.abs(G - np.eye(128))) < 1e-12


def test_legendre_low_degrees_closed_form():
    basis = LegendreBasis(2)
    x = np.linspace(0, TWO_PI, 7)
    xi = (x - np.pi) / np.pi
    np.testing.assert_allclose(legendre_eval(0, x, basis), np.sqrt(1 / TWO_PI))
    np.testing.assert_allclose(legendre_eval(1, x, basis), np.sqrt(3 / TWO_PI) * xi)
    np.testing.assert_allclose(
        legendre_eval(2, x, basis), np.sqrt(5 / TWO_PI) * 0.5 * (3 * xi**2 - 1), atol=1e-15
    )


def test_legendre_eval_rejects_points_outside_domain():
    with pytest.raises(ValueError):
        legendre_eval(1, np.array([-0.5]), LegendreBasis(3))


def test_legendre_eval_rejects_degree_out_of_range():
    with pytest.raises(ValueError):
        legendre_eval(4, np.array([1.0]), LegendreBasis(3))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=20))
def test_derivative_matches_finite_difference(coeffs):
    c = np.array(coeffs)
    dc = legendre_differentiate(c)
    x = np.linspace(0.5, 5.5, 9)
    h = 1e-6
    fd = (legendre_series(c, x + h) - legendre_series(c, x - h)) / (2 * h)
    exact = legendre_series(dc, x)
    scale = 1 + np.max(np.abs(exact))
    assert np.max(np.abs(fd - exact)) < 1e-6 * scale * len(c) ** 2


def test_derivative_of_polynomial_exact():
    # f(x) = x^3 on [0, 2pi], expanded and differentiated
    grid = gauss_legendre_rule(16)
    V = legendre_vander(grid.nodes, LegendreBasis(5))
    c = V.T @ (grid.weights * grid.nodes**3)
    x = np.array([0.3, 2.0, 6.0])
    np.testing.assert_allclose(legendre_series(legendre_differentiate(c), x).ravel(), 3 * x**2,
                               rtol=1e-12)
