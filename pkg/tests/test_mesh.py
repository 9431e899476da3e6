import numpy as np
import pytest

from vp_axistar.mesh import RadialMesh, aligned_mesh, clustered_mesh


@pytest.fixture(scope="module")
def mesh():
    return clustered_mesh(2.0)


def test_total_and_lower_integrals_exact(mesh):
    f = mesh.nodes**3
    assert abs(float(mesh.total_matrix(2.0) @ f) - 2.0**6 / 6.0) < 1e-12
    r = np.array([0.0, 0.02, 0.3, 1.0, 1.77, 2.0])
    lower = mesh.lower_matrix(2.0, r) @ f
    assert np.abs(lower - r**6 / 6.0).max() < 1e-13


def test_upper_scaled_integrals_exact(mesh):
    f = mesh.nodes**3
    r = np.array([0.0, 0.02, 0.3, 1.0, 1.77, 2.0])
    up0 = mesh.upper_scaled_matrix(0, r) @ f  # int_r^2 s f = (2^5 - r^5)/5
    assert np.abs(up0 - (2.0**5 - r**5) / 5.0).max() < 1e-12
    up4 = mesh.upper_scaled_matrix(4, r) @ f  # r^4 (2 - r)
    assert np.abs(up4 - r**4 * (2.0 - r)).max() < 1e-13
    up8 = mesh.upper_scaled_matrix(8, r[1:]) @ f  # r^8 (r^-3 - 2^-3)/3
    assert np.abs(up8 - r[1:] ** 8 * (r[1:] ** -3.0 - 0.125) / 3.0).max() < 1e-12


def test_interp_value_and_derivative(mesh):
    f = mesh.nodes**4
    r = np.array([0.0, 0.11, 0.97, 1.501, 2.0])
    assert np.abs(mesh.interp_matrix(r) @ f - r**4).max() < 1e-12
    assert np.abs(mesh.interp_matrix(r, deriv=1) @ f - 4 * r**3).max() < 1e-9


def test_lower_saturates_beyond_mesh(mesh):
    f = mesh.nodes**3
    got = mesh.lower_matrix(2.0, np.array([2.5, 7.0])) @ f
    assert np.abs(got - 2.0**6 / 6.0).max() < 1e-12
    assert np.abs(mesh.upper_scaled_matrix(4, np.array([2.5])) @ f).max() == 0.0


def test_negative_power_rejected_for_lower(mesh):
    with pytest.raises(ValueError):
        mesh.lower_matrix(-1.0, np.array([0.5]))


def test_edges_validation():
    with pytest.raises(ValueError):
        RadialMesh(np.array([0.1, 0.5, 1.0]))
    with pytest.raises(ValueError):
        RadialMesh(np.array([0.0, 0.5, 0.5, 1.0]))


def test_aligned_mesh_contains_knots_and_unit_edge():
    knots = np.linspace(0.0, 3.0, 65)
    mesh = aligned_mesh(2.0, knots)
    inside = knots[knots <= 2.0]
    for k in inside:
        assert np.abs(mesh.edges - k).min() < 1e-12
    assert np.abs(mesh.edges - 1.0).min() < 1e-12
    assert mesh.edges[0] == 0.0 and mesh.edges[-1] == 2.0


def test_aligned_mesh_piecewise_cubic_exact():
    # a cubic spline over the knots integrates exactly once edges align
    from scipy.interpolate import CubicSpline

    knots = np.linspace(0.0, 3.0, 65)
    mesh = aligned_mesh(1.0, knots)
    rng = np.random.default_rng(2)
    spline = CubicSpline(knots, rng.uniform(-1, 1, knots.size))
    vals = spline(mesh.nodes)
    exact = spline.antiderivative()(1.0) - spline.antiderivative()(0.0)
    assert abs(float(mesh.total_matrix(0.0) @ vals) - exact) < 1e-13
