import numpy as np
import pytest
from scipy.integrate import quad

from vp_axistar.numerics import gauss_legendre
from vp_axistar.profiles import (
    EnergyMomentum,
    EvenGaussian,
    PolytropeProfile,
    Profiles,
    SkewedRational,
    TabulatedRotation,
    energy_momentum,
    polytrope_density_constant,
)

E0 = -0.5


def brute_force_h(mu, gamma, r, u, psi=None, n_inner=64):
    """Nested-quadrature oracle for the density double integral.

    Outer energy integral by adaptive quadrature with the algebraic
    endpoint weight (E0 - E)^mu; inner velocity integral by a fixed
    Gauss-Legendre rule.  Independent of the production evaluator.
    """
    gl = gauss_legendre(n_inner)

    def inner(e):
        half = np.sqrt(2.0 * (e - u))
        if psi is None:
            return 2.0 * half
        return half * float(gl.weights @ psi(gamma * r * half * gl.nodes))

    val, _ = quad(
        inner, u, E0, weight="alg", wvar=(0.0, mu), limit=400,
        epsabs=1e-13, epsrel=1e-12,
    )
    return 2.0 * np.pi * val


class TestPolytrope:
    def test_cutoff(self):
        p = PolytropeProfile(1.0, E0)
        assert p.phi(E0) == 0.0
        assert p.phi(E0 + 0.3) == 0.0

    def test_unit_gap(self):
        assert PolytropeProfile(1.0, E0).phi(E0 - 1.0) == pytest.approx(1.0)

    def test_half_power(self):
        assert PolytropeProfile(0.5, E0).phi(E0 - 4.0) == pytest.approx(2.0)

    def test_exponent_range_enforced(self):
        with pytest.raises(ValueError):
            PolytropeProfile(-0.5, E0)
        with pytest.raises(ValueError):
            PolytropeProfile(3.5, E0)


class TestRotationProfiles:
    @pytest.mark.parametrize(
        "profile", [EvenGaussian(1.0), EvenGaussian(2.5), SkewedRational(0.5),
                    SkewedRational(0.9, a=0.8)]
    )
    def test_axioms_on_dense_sample(self, profile):
        p = np.linspace(-40.0, 40.0, 400001)
        psi = profile.psi(p)
        assert psi.min() >= 0.0
        assert profile.psi(0.0) == pytest.approx(1.0, abs=1e-15)
        assert abs(profile.psi_prime(0.0)) < 1e-15
        away = np.abs(p) > 1e-3
        assert np.abs(psi[away] - 1.0).min() > 0.0

    def test_even_gaussian_value(self):
        assert EvenGaussian(1.0).psi(1.0) == pytest.approx(np.exp(-1.0), abs=1e-15)

    def test_skewed_rational_value(self):
        # (1 + 1/2 * 1/2) / (1 + 3/8) = 10/11 with the default a = 3b/4
        assert SkewedRational(0.5).psi(1.0) == pytest.approx(10.0 / 11.0, abs=1e-15)

    def test_skewed_rational_rotates(self):
        prof = SkewedRational(0.5)
        p = np.linspace(0.1, 10.0, 200)
        assert np.abs(prof.psi(p) - prof.psi(-p)).max() > 1e-3

    def test_skew_parameter_constraints(self):
        with pytest.raises(ValueError):
            SkewedRational(1.5)
        with pytest.raises(ValueError):
            SkewedRational(0.5, a=0.1)

    @pytest.mark.parametrize("profile", [EvenGaussian(1.3), SkewedRational(0.4)])
    def test_derivatives_match_finite_differences(self, profile):
        rng = np.random.default_rng(0)
        for p0 in rng.uniform(-3, 3, size=20):
            h = 1e-6
            fd1 = (profile.psi(p0 + h) - profile.psi(p0 - h)) / (2 * h)
            fd2 = (
                profile.psi(p0 + h) - 2 * profile.psi(p0) + profile.psi(p0 - h)
            ) / h**2
            assert abs(profile.psi_prime(p0) - fd1) < 1e-8
            assert abs(profile.psi_second(p0) - fd2) < 1e-3


class TestTabulatedRotation:
    def _table(self, fn, lo=-6.0, hi=6.0, n=241):
        p = np.linspace(lo, hi, n)
        return p, fn(p)

    def test_loads_valid_table_and_interpolates(self, tmp_path):
        p, y = self._table(lambda p: np.exp(-p * p))
        path = tmp_path / "psi.csv"
        np.savetxt(path, np.column_stack([p, y]), delimiter=",")
        prof = TabulatedRotation.from_csv(path)
        assert prof.kind == "custom-table"
        assert prof.is_even
        assert abs(prof.psi(0.37) - np.exp(-0.37**2)) < 1e-6

    def test_rejects_negative_values(self):
        p, y = self._table(lambda p: np.cos(p))
        with pytest.raises(ValueError, match="psi >= 0"):
            TabulatedRotation(p, y)

    def test_rejects_wrong_center_value(self):
        p, y = self._table(lambda p: 2.0 * np.exp(-p * p))
        with pytest.raises(ValueError, match="psi\\(0\\) = 1"):
            TabulatedRotation(p, y)

    def test_rejects_slope_at_zero(self):
        p, y = self._table(lambda p: np.exp(-((p - 0.5) ** 2)) / np.exp(-0.25))
        with pytest.raises(ValueError):
            TabulatedRotation(p, y)

    def test_rejects_second_unit_value(self):
        p = np.linspace(-6, 6, 241)
        y = np.exp(-p * p)
        y[200] = 1.0
        with pytest.raises(ValueError, match="only at"):
            TabulatedRotation(p, y)


class TestEnergyMomentum:
    def test_definition(self):
        em = energy_momentum([1.0, 2.0, 0.5], [0.3, -0.2, 1.0], -0.7)
        assert em == EnergyMomentum(
            e=0.5 * (0.09 + 0.04 + 1.0) - 0.7, p=1.0 * (-0.2) - 2.0 * 0.3
        )


@pytest.fixture(scope="module")
def skewed():
    return Profiles(PolytropeProfile(1.0, E0), SkewedRational(0.5))


@pytest.fixture(scope="module")
def even():
    return Profiles(PolytropeProfile(1.0, E0), EvenGaussian(1.0))


class TestDensityIntegral:
    def test_vacuum_region(self, skewed):
        assert skewed.h_eval(0.3, 0.7, E0) == 0.0
        assert skewed.h_eval(0.3, 0.7, E0 + 1.0) == 0.0
        assert skewed.h_du(0.3, 0.7, E0) == 0.0
        assert skewed.current_magnitude(0.3, 0.7, E0 + 0.2) == 0.0

    def test_negative_radius_rejected(self, skewed):
        with pytest.raises(ValueError):
            skewed.h_eval(0.3, -0.1, -0.9)

    def test_static_limit_is_radius_independent(self, skewed):
        u = -0.8
        vals = skewed.h_eval(0.0, np.array([0.0, 0.3, 1.4]), u)
        assert np.ptp(vals) == 0.0

    @pytest.mark.parametrize("mu", [-0.25, 0.5, 1.0, 2.5])
    def test_closed_form_against_nested_oracle(self, mu):
        from scipy.special import beta

        prof = Profiles(PolytropeProfile(mu, E0), EvenGaussian(1.0))
        c_mu = 4.0 * np.sqrt(2.0) * np.pi * beta(mu + 1.0, 1.5)
        for u in (-2.0, -1.1, -0.6):
            oracle = brute_force_h(mu, 0.0, 0.0, u)
            closed = c_mu * (E0 - u) ** (mu + 1.5)
            assert abs(oracle / closed - 1.0) < 1e-9
            assert abs(prof.h0(u) / closed - 1.0) < 1e-15

    def test_quadrature_path_matches_oracle_with_rotation(self, skewed):
        gamma, r, u = 0.4, 0.8, -0.9
        oracle = brute_force_h(1.0, gamma, r, u, psi=skewed.rotation.psi)
        assert abs(skewed.h_eval(gamma, r, u) / oracle - 1.0) < 1e-10

    def test_h_du_closed_form_at_gamma_zero(self, skewed):
        mu = 1.0
        c_mu = polytrope_density_constant(mu)
        u = -0.9
        expected = -c_mu * (mu + 1.5) * (E0 - u) ** (mu + 0.5)
        assert skewed.h_du(0.0, 0.7, u) == pytest.approx(expected, rel=1e-14)

    def test_h_du_nonpositive_everywhere(self, skewed):
        rng = np.random.default_rng(1)
        g = rng.uniform(-0.5, 0.5, 100)
        r = rng.uniform(0.0, 1.5, 100)
        u = rng.uniform(-2.0, 0.0, 100)
        vals = np.array([skewed.h_du(gi, ri, ui) for gi, ri, ui in zip(g, r, u)])
        assert np.all(vals <= 0.0)

    def test_h_monotone_in_u(self, skewed):
        u = np.linspace(-2.0, E0 - 1e-6, 60)
        for gamma, r in ((0.0, 0.3), (0.3, 0.8), (0.45, 1.2)):
            vals = skewed.h_eval(gamma, r, u)
            assert np.all(np.diff(vals) < 0.0)

    def test_partials_match_finite_differences(self, skewed):
        # the step keeps the quotient's rounding noise below the 1e-6
        # relative target even where the derivatives are small
        rng = np.random.default_rng(7)
        eps = 1e-4
        for _ in range(100):
            gamma = rng.uniform(-0.5, 0.5)
            r = rng.uniform(0.05, 1.4)
            u = rng.uniform(-1.8, E0 - 0.05)
            fd_u = (skewed.h_eval(gamma, r, u + eps) - skewed.h_eval(gamma, r, u - eps)) / (
                2 * eps
            )
            fd_r = (skewed.h_eval(gamma, r + eps, u) - skewed.h_eval(gamma, r - eps, u)) / (
                2 * eps
            )
            assert skewed.h_du(gamma, r, u) == pytest.approx(fd_u, rel=1e-6)
            assert skewed.h_dr(gamma, r, u) == pytest.approx(
                fd_r, rel=1e-6, abs=1e-12
            )

    def test_h_dr_vanishes_for_zero_gamma(self, skewed, even):
        assert skewed.h_dr(0.0, 0.8, -0.9) == 0.0
        # an even profile has an odd derivative, so the s-integrand of
        # d h / d r is even and the derivative does NOT vanish
        assert abs(even.h_dr(0.4, 0.8, -0.9)) > 1e-4

    def test_h_dr_vanishes_for_unit_plus_odd_psi(self):
        # profiles of the form 1 + odd(P) are invisible to the symmetric
        # s-integral: h is gamma-independent and d h / d r vanishes
        p = np.linspace(-8.0, 8.0, 1601)
        table = TabulatedRotation(p, 1.0 + 0.3 * p**3 / (1.0 + p**4))
        prof = Profiles(PolytropeProfile(1.0, E0), table)
        assert abs(prof.h_dr(0.4, 0.8, -0.9)) < 1e-9
        assert abs(prof.h_eval(0.4, 0.8, -0.9) - prof.h0(-0.9)) < 1e-9

    def test_current_branches(self, skewed, even):
        u = -0.9
        assert abs(even.current_magnitude(0.4, 0.8, u)) < 1e-14
        assert skewed.current_magnitude(0.4, 0.0, u) == 0.0
        assert skewed.current_magnitude(0.4, 0.8, u) != 0.0

    def test_doubling_node_counts(self, skewed):
        fine = Profiles(skewed.polytrope, skewed.rotation, 48, 48)
        for gamma, r, u in ((0.3, 0.8, -0.9), (0.45, 1.3, -1.5), (0.1, 0.2, -0.6)):
            a = skewed.h_eval(gamma, r, u)
            b = fine.h_eval(gamma, r, u)
            assert abs(a / b - 1.0) < 1e-9

    def test_quadratic_approach_to_static_limit(self, even):
        # Richardson slope of h(gamma) - h(0) ~ gamma^2 for even psi
        r, u = 0.8, -0.9
        gaps = [abs(even.h_eval(g, r, u) - even.h0(u)) for g in (0.2, 0.1, 0.05)]
        slope1 = np.log(gaps[0] / gaps[1]) / np.log(2.0)
        slope2 = np.log(gaps[1] / gaps[2]) / np.log(2.0)
        assert slope1 == pytest.approx(2.0, abs=0.05)
        assert slope2 == pytest.approx(2.0, abs=0.05)
