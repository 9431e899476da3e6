import numpy as np
import pytest

from vp_axistar.operators import DeformationOperator
from vp_axistar.profiles import (
    EvenGaussian,
    PolytropeProfile,
    Profiles,
    SkewedRational,
)
from vp_axistar.spherical import solve_base_state


@pytest.fixture(scope="session")
def base_mu1():
    return solve_base_state(1.0)


@pytest.fixture(scope="session")
def profiles_skewed(base_mu1):
    return Profiles(PolytropeProfile(1.0, base_mu1.e0), SkewedRational(0.5))


@pytest.fixture(scope="session")
def profiles_even(base_mu1):
    return Profiles(PolytropeProfile(1.0, base_mu1.e0), EvenGaussian(1.0))


@pytest.fixture(scope="session")
def operator_mu1(base_mu1, profiles_skewed):
    return DeformationOperator(base_mu1, profiles_skewed)


@pytest.fixture(scope="session")
def operator_even(base_mu1, profiles_even):
    return DeformationOperator(base_mu1, profiles_even)


@pytest.fixture(scope="session")
def family(operator_mu1):
    """The shared continuation family: 8 steps to gamma = 0.25."""
    result = operator_mu1.continue_in_gamma(0.25, 8, tol=5e-7, max_iter=8)
    assert not result.truncated, result.failure_reason
    return result


def random_admissible_field(op, rng, target_norm=0.03, decay=3.0):
    """Random field in the admissible set with realistic sector decay."""
    f = op.zero_field()
    coeffs = f.coeffs.copy()
    r = f.radial_nodes
    for i in range(coeffs.shape[0]):
        w = rng.normal(size=4)
        coeffs[i] = (
            1.0
            / (1 + i) ** decay
            * r
            * (
                w[0] * np.sin(1.1 * r)
                + w[1] * np.cos(0.7 * r)
                + 0.3 * w[2] * np.sin(2.3 * r)
                + 0.3 * w[3] * r / (1 + r)
            )
        )
    trial = f.with_coeffs(coeffs)
    return f.with_coeffs(coeffs * (target_norm / trial.x_norm_estimate()))
