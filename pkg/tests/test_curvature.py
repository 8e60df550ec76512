import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radialmc.curvature import (
    AnnulusError,
    CurvatureSpec,
    CurvatureSpecError,
    anisotropic_benchmark,
    check_growth,
    circle_directions,
    crossing_benchmark,
    eval_K,
    fibonacci_directions,
    homogeneous,
    radial_derivative,
    sphere_benchmark,
)


@pytest.mark.parametrize("m", [2, 3])
def test_eval_K_examples(m):
    e = np.zeros(m)
    e[0] = 1.0
    assert eval_K(homogeneous(m, 1.0), 2 * e) == pytest.approx((m - 1) / 2, rel=1e-15)
    assert eval_K(sphere_benchmark(m), e) == pytest.approx(m - 1, rel=1e-15)


def test_eval_K_with_mode():
    spec = CurvatureSpec(3, ("power", 2.0, -2.0), modes=((0.1, "z"),))
    assert eval_K(spec, np.array([0.0, 0.0, 1.0])) == pytest.approx(2.0 * 1.1, rel=1e-15)
    spec2 = CurvatureSpec(2, ("power", 1.0, -1.0), modes=((0.1, "cos1"),))
    assert eval_K(spec2, np.array([1.0, 0.0])) == pytest.approx(1.1, rel=1e-15)


def test_eval_K_outside_annulus():
    with pytest.raises(AnnulusError):
        eval_K(homogeneous(2, 1.0), np.array([100.0, 0.0]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"profile": ("power", -1.0, -1.0)},
        {"profile": ("bogus", 1.0)},
        {"profile": ("power", 1.0, -1.0), "modes": ((1.5, "cos1"),)},
        {"profile": ("power", 1.0, -1.0), "modes": ((0.1, "z"),)},
        {"profile": ("power", 1.0, -1.0), "annulus": (2.0, 1.0)},
        {"profile": ("rational", [2.0, -1.0], [0.0, 1.0])},
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(CurvatureSpecError):
        CurvatureSpec(2, **kwargs)


@pytest.mark.parametrize("m", [2, 3])
def test_radial_derivative_examples(m):
    d = np.zeros(m)
    d[-1] = 1.0
    for rho in (0.3, 1.0, 1.7):
        assert radial_derivative(homogeneous(m, 1.0), d, rho) == pytest.approx(0.0, abs=1e-14)
        assert radial_derivative(sphere_benchmark(m), d, rho) == pytest.approx(-(m - 1), rel=1e-13)
        c = (m - 1) * 1.7
        assert radial_derivative(crossing_benchmark(m), d, rho) == pytest.approx(-c / rho**2, rel=1e-13)


@given(rho=st.floats(0.2, 5.0), p=st.floats(-3.0, 1.0), amp=st.floats(-0.4, 0.4))
def test_radial_derivative_matches_centered_difference(rho, p, amp):
    spec = CurvatureSpec(3, ("power", 2.0, p), modes=((amp, "xz"),), annulus=(0.05, 20.0))
    d = np.array([0.6, 0.0, 0.8])
    h = 1e-5 * rho
    fd = (rho + h) * eval_K(spec, (rho + h) * d) - (rho - h) * eval_K(spec, (rho - h) * d)
    fd /= 2 * h
    exact = radial_derivative(spec, d, rho)
    assert abs(exact - fd) <= 1e-8 * max(1.0, abs(exact))


def test_tabulated_profile_derivative():
    r = np.geomspace(0.04, 25.0, 400)
    spec = CurvatureSpec(2, ("tabulated", r, 1.0 / r))
    d = np.array([1.0, 0.0])
    # rho K == 1 up to spline error; the derivative is centered-difference based
    assert abs(radial_derivative(spec, d, 1.3)) < 1e-4


@pytest.mark.parametrize("m", [2, 3])
def test_growth_sphere_benchmark(m):
    g = check_growth(sphere_benchmark(m))
    assert g.satisfied and g.monotone_on_annulus
    assert g.r1 == pytest.approx(1.0, abs=1e-12) and g.r2 == pytest.approx(1.0, abs=1e-12)
    assert g.alpha == pytest.approx(2 * (m - 1), rel=1e-10)


@pytest.mark.parametrize("m", [2, 3])
def test_growth_crossing_benchmark(m):
    g = check_growth(crossing_benchmark(m, 1.7))
    assert abs(g.r1 - 1.7) <= 1e-10 and abs(g.r2 - 1.7) <= 1e-10


@pytest.mark.parametrize("m", [2, 3])
def test_growth_fails_below_threshold(m):
    g = check_growth(homogeneous(m, 0.5))
    assert not g.satisfied
    assert "no sign change" in g.diagnostic


def test_growth_fails_for_constant_curvature():
    # rho K = (m-1) rho increases through m-1: wrong direction
    g = check_growth(CurvatureSpec(3, ("power", 2.0, 0.0)))
    assert not g.satisfied


def test_radial_crossing_is_direction_independent():
    spec = crossing_benchmark(3, 1.3)
    a = check_growth(spec, directions=fibonacci_directions(64))
    b = check_growth(spec, directions=fibonacci_directions(17))
    assert abs(a.r1 - b.r1) < 1e-10 and abs(a.r2 - b.r2) < 1e-10
    c = check_growth(crossing_benchmark(2, 1.3), directions=circle_directions(7))
    assert abs(c.r1 - a.r1) < 1e-10


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_homogeneous_spec_has_zero_alpha(c):
    g = check_growth(homogeneous(3, c))
    assert not g.satisfied
    assert g.alpha <= 1e-12


def test_anisotropic_crossings_bracket_one():
    g = check_growth(anisotropic_benchmark(0.1))
    # rho K = 2(1 + 0.05 z)/rho crosses 2 at rho = 1 + 0.05 z
    assert g.r1 == pytest.approx(0.95, abs=2e-3) and g.r2 == pytest.approx(1.05, abs=2e-3)
    assert g.r1 <= 1.0 <= g.r2
    assert g.barrier_hull == (g.r1, g.r2)


def test_base_dependent_spec_flags_horizontal_gradient():
    spec = CurvatureSpec(2, ("rational", [2.0, -1.0], [0.0, 1.0]), modes=((0.1, "base_cos1"),), annulus=(0.05, 1.9))
    g = check_growth(spec)
    assert g.satisfied
    assert not g.horizontal_gradient_null and g.max_horizontal_gradient > 0.01
    g0 = check_growth(sphere_benchmark(2))
    assert g0.horizontal_gradient_null
