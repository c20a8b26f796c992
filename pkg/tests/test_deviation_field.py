import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kpz_ldp.deviation_field import (InstantonProfile, cumulative_r, ell, ell_prime, instanton_grid, integral_r,
                                     l2_norm_sq, r_ode_rhs, relation_residual, rho_star, rho_star_field,
                                     scale_deviation, slice_mass, solve_r)
from kpz_ldp.errors import DomainError
from kpz_ldp.fields import ScalarField, uniform_grid

interior = st.floats(1e-6, 2.0 - 1e-6)


def mp_r(t):
    """r from the y-relation solved in 40-digit arithmetic."""
    mpmath.mp.dps = 40
    target = mpmath.pi / 2 * abs(mpmath.mpf(t) - 1)
    y = mpmath.findroot(lambda v: v / (1 + v * v) + mpmath.atan(v) - target, 1.0)
    return float(mpmath.pi / 2 * (1 + y * y))


def test_centre_value():
    assert solve_r(1.0) == pytest.approx(math.pi / 2, rel=1e-15)


@pytest.mark.parametrize("t", [0.05, 0.3, 0.7, 1.2, 1.9])
def test_r_against_extended_precision(t):
    assert solve_r(t) == pytest.approx(mp_r(t), rel=1e-12)


# dyadic times so that 2 - t is exact
@given(st.integers(1, 2 ** 21 - 1))
def test_r_symmetric_bounded_and_relation_holds(k):
    t = k / 2 ** 20
    r = solve_r(t)
    assert r >= math.pi / 2
    assert solve_r(2.0 - t) == pytest.approx(r, rel=1e-12)
    if 0.01 < t < 1.99:
        assert abs(relation_residual(t, r)) < 1e-12


def test_r_matches_ode_march():
    # integrate r' = sqrt(2/pi) r^2 sqrt(r - pi/2) from just right of t = 1
    t0 = 1.05
    sol = solve_ivp(lambda t, r: [r_ode_rhs(t, r[0])], (t0, 1.9), [solve_r(t0)], rtol=1e-12, atol=1e-12)
    assert sol.y[0, -1] == pytest.approx(solve_r(1.9), rel=1e-8)


def test_r_derivative_matches_ode_rhs():
    t = np.linspace(1.05, 1.9, 60)
    h = 1e-5
    fd = (solve_r(t + h) - solve_r(t - h)) / (2 * h)
    rhs = np.array([r_ode_rhs(ti, solve_r(ti)) for ti in t])
    assert np.max(np.abs(fd / rhs - 1)) < 1e-6


def test_domain_errors():
    for bad in (0.0, 2.0, -1.0, 3.0):
        with pytest.raises(DomainError):
            solve_r(bad)
    with pytest.raises(DomainError):
        ell(2.5)


def test_ell_concave_and_vanishing_at_ends():
    t = np.linspace(0.0, 2.0, 401)
    width = ell(t)
    assert width[0] == 0.0 and width[-1] == 0.0
    assert np.max(np.diff(width, 2)) <= 1e-12


@given(st.floats(0.01, 1.99))
def test_ell_prime_matches_difference_quotient(t):
    h = 1e-6
    fd = (ell(t + h) - ell(t - h)) / (2 * h)
    assert ell_prime(t) == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_integral_of_r():
    assert abs(integral_r() - 2 * math.pi) < 1e-5
    assert abs(integral_r(0.0, 1.0) - math.pi) < 1e-5
    assert cumulative_r(1.0) == pytest.approx(math.pi, rel=1e-14)


def test_integral_of_r_against_plain_quadrature():
    # t = 2 sin^2(theta) maps the end singularities to smooth behaviour for adaptive quad
    mpmath.mp.dps = 20
    value = mpmath.quad(lambda v: solve_r(float(v) ** 3) * 3 * float(v) ** 2, [0, 0.5, 1])
    assert float(value) == pytest.approx(math.pi, abs=1e-5)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_cumulative_is_additive(a, b):
    lo, hi = min(a, b), max(a, b)
    assert integral_r(lo, hi) == pytest.approx(cumulative_r(hi) - cumulative_r(lo), abs=1e-9)


def test_rho_star_examples():
    assert rho_star(1.0, 0.0) == pytest.approx(-0.25, rel=1e-14)
    expected = -(solve_r(0.5) / (2 * math.pi)) * (1 - 0.01 / ell(0.5) ** 2)
    assert rho_star(0.5, 0.1) == pytest.approx(expected, rel=1e-14)
    assert rho_star(0.5, 1.01 * ell(0.5)) == 0.0


@given(st.floats(0.0, 2.0), st.floats(-3.0, 3.0))
def test_rho_star_nonpositive_and_even(t, x):
    v = rho_star(t, x)
    assert v <= 0
    assert rho_star(t, -x) == v
    if t in (0.0, 2.0) or abs(x) > ell(t):
        assert v == 0.0


@given(st.floats(0.01, 1.99))
def test_slice_mass_constant(t):
    assert slice_mass(rho_star, t) == pytest.approx(-2 / (3 * math.pi), rel=1e-6)


def test_l2_norm_examples():
    assert l2_norm_sq(rho_star_field()) == pytest.approx(8 / (15 * math.pi), abs=1e-4)
    grid = uniform_grid(201, 401, 2.0)
    assert l2_norm_sq(ScalarField(grid, np.zeros(grid.shape))) == 0.0
    box = ((grid.tt >= 0) & (grid.tt <= 1) & (grid.x >= 0) & (grid.x <= 1)).astype(float)
    assert l2_norm_sq(ScalarField(grid, box)) == pytest.approx(1.0, abs=2e-2)


def test_scaling_identity_and_norm_law():
    field = rho_star_field()
    same = scale_deviation(field, 1.0)
    assert np.array_equal(same.values, field.values)
    ratio = l2_norm_sq(scale_deviation(field, 2.0)) / l2_norm_sq(field)
    assert ratio == pytest.approx(2 ** 2.5, rel=1e-3)


@given(st.floats(0.2, 5.0), st.floats(0.05, 1.95))
def test_scaled_support(kappa, t):
    scaled = scale_deviation(rho_star, kappa)
    edge = math.sqrt(kappa) * ell(t)
    assert scaled(t, 0.999 * edge) < 0
    assert scaled(t, 1.001 * edge) == 0


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_scaling_is_a_group_action(a, b):
    field = rho_star_field(instanton_grid(n_t=64, n_xi=33))
    twice = scale_deviation(scale_deviation(field, a), b)
    once = scale_deviation(field, a * b)
    np.testing.assert_allclose(twice.values, once.values, rtol=1e-12)
    np.testing.assert_allclose(twice.grid.x, once.grid.x, rtol=1e-12)


def test_scaling_conventions_differ():
    inv = scale_deviation(rho_star, 4.0)
    direct = scale_deviation(rho_star, 4.0, convention="sqrt")
    assert inv(1.0, 1.0) != direct(1.0, 1.0)
    with pytest.raises(DomainError):
        scale_deviation(rho_star, 0.0)


def test_profile_bundle():
    p = InstantonProfile(width=2.0)
    assert p.in_support(1.0, 1.9 * ell(1.0))
    assert p.deviation(1.0, 0.0) == pytest.approx(4 * rho_star(1.0, 0.0))
