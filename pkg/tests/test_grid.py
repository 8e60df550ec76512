import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radialmc.grid import GridError, build_grid, covariant_gradient, covariant_hessian, vertical_laplacian


def test_circle_grid_layout():
    g = build_grid(2, 0, 64)
    assert g.shape == (64,)
    assert g.vertical == [0] and g.horizontal == []
    np.testing.assert_allclose(g.coords["theta"], 2 * np.pi * np.arange(64) / 64)
    np.testing.assert_allclose(np.linalg.norm(g.xi, axis=1), 1.0)


def test_sphere_grid_is_staggered_off_the_poles():
    g = build_grid(3, 0, 32)
    assert g.shape == (32, 64)
    assert len(g.vertical) == 2
    theta = np.unique(g.coords["theta"])
    np.testing.assert_allclose(theta, (np.arange(32) + 0.5) * np.pi / 32)
    assert theta.min() > 0 and theta.max() < np.pi


def test_bundle_grid_direction_classes():
    g = build_grid(2, 1, 64, 32)
    assert g.shape == (64, 32)
    assert g.size == 64 * 32
    assert list(g.mu) == [0, 1]


@pytest.mark.parametrize("args", [(4, 0, 32), (2, 2, 32), (2, 0, 4), (3, 1, 16, 6)])
def test_build_grid_rejects(args):
    with pytest.raises(GridError):
        build_grid(*args)


def test_field_shape_and_finiteness_checked():
    g = build_grid(2, 0, 16)
    with pytest.raises(GridError):
        g.field(np.zeros(15))
    bad = np.zeros(16)
    bad[3] = np.nan
    with pytest.raises(GridError):
        g.field(bad)


@pytest.mark.parametrize("args", [(2, 0, 16), (3, 0, 16), (2, 1, 16, 8), (3, 1, 8, 8)])
def test_constants_have_zero_derivatives(args):
    g = build_grid(*args)
    d = g.derivatives(np.full(g.size, 0.37))
    assert np.abs(d.first).max() < 1e-13
    assert np.abs(d.second).max() < 1e-12


def _orders(errors):
    return [a / b for a, b in zip(errors, errors[1:])]


def test_circle_first_and_second_derivative_order():
    e1, e2 = [], []
    for n in (32, 64, 128):
        g = build_grid(2, 0, n)
        th = g.coords["theta"]
        e1.append(np.abs(covariant_gradient(g, np.sin(th)).first[:, 0] - np.cos(th)).max())
        e2.append(np.abs(covariant_hessian(g, np.cos(th)).second[:, 0, 0] + np.cos(th)).max())
    assert min(_orders(e1)) >= 3.5
    assert min(_orders(e2)) >= 3.5


def test_sphere_gradient_of_zonal_field():
    # u = cos(theta): |grad u| = sin(theta)
    errs = []
    for n in (16, 32, 64):
        g = build_grid(3, 0, n)
        th = g.coords["theta"]
        grad = covariant_gradient(g, np.cos(th)).first
        errs.append(np.abs(np.linalg.norm(grad, axis=1) - np.sin(th)).max())
    assert min(_orders(errs)) >= 3.5


# (field, eigenvalue) pairs: zonal and sectoral harmonics converge at second order
# everywhere; longitude-wavenumber-1 content is first order on the polar rows
HARMONICS = {
    "z": (lambda x: x[:, 2], -2.0),
    "xy": (lambda x: x[:, 0] * x[:, 1], -6.0),
    "x2-y2": (lambda x: x[:, 0] ** 2 - x[:, 1] ** 2, -6.0),
    "3z2-1": (lambda x: 3 * x[:, 2] ** 2 - 1, -6.0),
}


@pytest.mark.parametrize("name", sorted(HARMONICS))
def test_sphere_laplacian_eigenvalues(name):
    f, lam = HARMONICS[name]
    errs = []
    for n in (16, 32, 64):
        g = build_grid(3, 0, n)
        u = f(g.xi)
        errs.append(np.abs(vertical_laplacian(g, u) - lam * u).max())
    assert errs[-1] < 0.02
    assert min(_orders(errs)) >= 3.5


@pytest.mark.parametrize("name,f", [("x", lambda x: x[:, 0]), ("xz", lambda x: x[:, 0] * x[:, 2])])
def test_wavenumber_one_converges_away_from_poles(name, f):
    lam = -2.0 if name == "x" else -6.0
    errs, pole = [], []
    for n in (16, 32, 64):
        g = build_grid(3, 0, n)
        u = f(g.xi)
        err = np.abs(vertical_laplacian(g, u) - lam * u)
        band = np.abs(np.cos(g.coords["theta"])) < np.cos(np.pi / 8)
        errs.append(err[band].max())
        pole.append(err.max())
    assert min(_orders(errs)) >= 3.5
    # pole rows still converge, at first order
    assert min(_orders(pole)) >= 1.8


def _exact_sphere_hessian(g, which):
    """Frame Hessian of x, y, z restricted to S^2: D^2 x_i = -x_i G."""
    u = g.xi[:, which]
    return u, -u[:, None, None] * np.eye(2)[None]


def test_sphere_hessian_of_z_is_minus_z_metric():
    errs = []
    for n in (16, 32, 64):
        g = build_grid(3, 0, n)
        u, exact = _exact_sphere_hessian(g, 2)
        errs.append(np.abs(covariant_hessian(g, u).second - exact).max())
    assert min(_orders(errs)) >= 3.5


def test_hessian_is_symmetric():
    g = build_grid(3, 1, 16, 8)
    rng = np.random.default_rng(3)
    u = rng.normal(size=g.size)
    assert g.derivatives(u).asymmetry() < 1e-12


def test_base_derivatives_of_base_independent_field_vanish():
    g = build_grid(3, 1, 16, 12)
    u = np.cos(g.coords["theta"]) + 0.3 * np.sin(2 * g.coords["phi"])
    d = g.derivatives(u)
    b = g.horizontal[0]
    assert np.abs(d.first[:, b]).max() < 1e-13
    assert np.abs(d.second[:, b, :]).max() < 1e-12


def test_base_derivative_is_periodic_difference():
    errs = []
    for nb in (16, 32, 64):
        g = build_grid(2, 1, 16, nb)
        x = g.coords["x"]
        d = g.derivatives(np.sin(x))
        errs.append(np.abs(d.first[:, 1] - np.cos(x)).max())
    assert min(_orders(errs)) >= 3.5


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_derivatives_are_linear(a, b, seed):
    g = build_grid(3, 1, 8, 8)
    rng = np.random.default_rng(seed)
    u, w = rng.normal(size=(2, g.size))
    lhs = g.derivatives(a * u + b * w)
    du, dw = g.derivatives(u), g.derivatives(w)
    scale = 1.0 + abs(a) + abs(b)
    assert np.abs(lhs.first - (a * du.first + b * dw.first)).max() < 1e-11 * scale * 10
    assert np.abs(lhs.second - (a * du.second + b * dw.second)).max() < 1e-10 * scale * 10


def test_frame_is_orthonormal_and_tangent():
    g = build_grid(3, 0, 16)
    e = g.frame()
    gram = np.einsum("nai,nbi->nab", e, e)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-14)
    assert np.abs(np.einsum("nai,ni->na", e, g.xi)).max() < 1e-14
