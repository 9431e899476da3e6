import numpy as np
import pytest

from vp_axistar.numerics import (
    LegendreBasis,
    gauss_jacobi,
    gauss_legendre,
    legendre_eval,
    legendre_project,
    shifted_jacobi,
)


def poly_integral_legendre(coeffs):
    """integral over [-1,1] of sum_k c_k t^k, analytically."""
    k = np.arange(len(coeffs))
    moments = (1.0 - (-1.0) ** (k + 1)) / (k + 1)
    return float(np.dot(coeffs, moments))


def poly_integral_jacobi(coeffs, alpha):
    """integral over [0,1] of t^alpha sum_k c_k t^k, analytically."""
    k = np.arange(len(coeffs))
    return float(np.dot(coeffs, 1.0 / (alpha + k + 1.0)))


def test_single_point_rule_is_midpoint():
    rule = gauss_legendre(1)
    assert rule.nodes.tolist() == [0.0]
    assert rule.weights.tolist() == [2.0]


def test_two_point_nodes():
    rule = gauss_legendre(2)
    assert np.allclose(rule.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    assert np.allclose(rule.weights, [1.0, 1.0], atol=1e-15)


def test_quartic_with_three_points():
    rule = gauss_legendre(3)
    assert abs(rule.integrate(rule.nodes**4) - 2.0 / 5.0) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16, 32, 64])
def test_legendre_exactness_through_degree(n):
    rng = np.random.default_rng(n)
    rule = gauss_legendre(n)
    coeffs = rng.uniform(-1, 1, size=2 * n)  # degree 2n-1
    vals = np.polynomial.polynomial.polyval(rule.nodes, coeffs)
    assert abs(rule.integrate(vals) - poly_integral_legendre(coeffs)) < 1e-12


def test_rule_structure():
    for n in (2, 7, 33):
        rule = gauss_legendre(n)
        assert np.all(np.diff(rule.nodes) > 0)
        assert np.all(rule.weights > 0)


def test_jacobi_alpha_zero_matches_shifted_legendre():
    gj = gauss_jacobi(6, 0.0)
    gl = gauss_legendre(6)
    assert np.allclose(gj.nodes, 0.5 * (gl.nodes + 1.0), atol=1e-14)
    assert np.allclose(gj.weights, 0.5 * gl.weights, atol=1e-14)


def test_jacobi_singular_weight_one_point():
    # 1-point rule still integrates the bare weight: int t^-1/4 = 4/3
    rule = gauss_jacobi(1, -0.25)
    assert abs(rule.weights.sum() - 4.0 / 3.0) < 1e-14


def test_jacobi_half_power_linear():
    rule = gauss_jacobi(4, 0.5)
    assert abs(rule.integrate(rule.nodes) - 2.0 / 5.0) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64])
@pytest.mark.parametrize("alpha", [-0.45, -0.25, 0.5, 1.0, 2.5])
def test_jacobi_exactness_through_degree(n, alpha):
    rng = np.random.default_rng(3 * n + 1)
    rule = gauss_jacobi(n, alpha)
    coeffs = rng.uniform(-1, 1, size=2 * n)
    vals = np.polynomial.polynomial.polyval(rule.nodes, coeffs)
    assert abs(rule.integrate(vals) - poly_integral_jacobi(coeffs, alpha)) < 1e-12


def test_jacobi_rejects_nonintegrable_weight():
    with pytest.raises(ValueError):
        gauss_jacobi(4, -1.0)
    with pytest.raises(ValueError):
        gauss_jacobi(0, 0.5)


def test_two_sided_weight_rule():
    # int t^1 (1-t)^0.5 t^3 dt = B(5, 1.5)
    from scipy.special import beta

    rule = shifted_jacobi(8, 1.0, 0.5)
    assert abs(rule.integrate(rule.nodes**3) - beta(5.0, 1.5)) < 1e-14


def test_legendre_eval_low_degrees():
    x = np.linspace(-1, 1, 11)
    assert np.allclose(legendre_eval(0, x), 1.0)
    assert np.allclose(legendre_eval(1, x), x)
    assert legendre_eval(2, 0.5) == pytest.approx(-0.125, abs=1e-15)
    for l in range(9):
        assert legendre_eval(l, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_legendre_eval_domain():
    with pytest.raises(ValueError):
        legendre_eval(3, 1.5)


def test_projection_constant_and_pure_mode():
    basis = LegendreBasis(8, 32)
    c = basis.project(np.ones(32))
    assert c[0] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(c[1:]).max() < 5e-13
    p2 = legendre_eval(2, basis.nodes)
    c = basis.project(p2)
    assert c[2] == pytest.approx(1.0, abs=1e-13)
    mask = np.ones(9, dtype=bool)
    mask[2] = False
    assert np.abs(c[mask]).max() < 1e-12


def test_projection_quartic():
    basis = LegendreBasis(8, 32)
    c = basis.project(basis.nodes**4)
    assert c[0] == pytest.approx(1.0 / 5.0, abs=1e-14)
    assert c[2] == pytest.approx(4.0 / 7.0, abs=1e-14)
    assert c[4] == pytest.approx(8.0 / 35.0, abs=1e-14)


def test_orthogonality_inner_products():
    basis = LegendreBasis(8, 32)
    rule = gauss_legendre(32)
    for l in range(9):
        pl = legendre_eval(l, rule.nodes)
        for k in range(9):
            pk = legendre_eval(k, rule.nodes)
            expected = 2.0 / (2 * l + 1) if l == k else 0.0
            assert abs(rule.integrate(pl * pk) - expected) < 1e-12


def test_even_projection_roundtrip_random_polynomials():
    rng = np.random.default_rng(5)
    basis = LegendreBasis(8, 32, even_only=True)
    x_check = np.linspace(-1, 1, 101)
    for _ in range(20):
        coeff = np.zeros(9)
        coeff[::2] = rng.uniform(-1, 1, size=5)
        samples = sum(c * legendre_eval(l, basis.nodes) for l, c in enumerate(coeff))
        exact = sum(c * legendre_eval(l, x_check) for l, c in enumerate(coeff))
        recon = basis.evaluate(basis.project(samples), x_check)
        assert np.abs(recon - exact).max() < 1e-10


def test_even_only_zeroes_odd_coefficients():
    basis = LegendreBasis(8, 32, even_only=True)
    c = basis.project(basis.nodes**3)
    assert np.abs(c[1::2]).max() == 0.0


def test_insufficient_samples_rejected():
    with pytest.raises(ValueError):
        legendre_project(np.ones(5), max_degree=8)
