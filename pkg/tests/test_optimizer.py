import math

import numpy as np
import pytest

from kpz_ldp.deviation_field import rho_star
from kpz_ldp.errors import DomainError
from kpz_ldp.fields import ScalarField
from kpz_ldp.pde_solver import BridgeFrame, scaled_h, unscaled_h
from kpz_ldp.rate_function import phi_exact
from kpz_ldp.variational_optimizer import (deep_tail_scaled_value, minimize_rate, near_center_candidate,
                                           near_center_field)

QUAD = 1.0 / math.sqrt(2.0 * math.pi)


@pytest.fixture(scope="module")
def small_lam_runs():
    return {(lam, tail): minimize_rate(lam, tail) for lam in (0.05, 0.1, 0.2) for tail in ("lower", "upper")}


def test_candidate_rate_closed_form():
    rep = near_center_candidate(0.1, 1.05, check=False)
    assert rep.rate_bound == pytest.approx(1.05 ** 2 * 0.01 * QUAD, rel=1e-14)
    assert 0.5 * rep.field.norm() ** 2 == pytest.approx(rep.rate_bound, rel=1e-3)


def test_candidate_norm_scales_quadratically():
    a = near_center_candidate(0.05, 1.2, check=False).field.norm() ** 2
    b = near_center_candidate(0.2, 1.2, check=False).field.norm() ** 2
    assert b / a == pytest.approx(16.0, rel=1e-12)


def test_candidate_is_feasible():
    rep = near_center_candidate(0.05, 1.1)
    assert rep.satisfied and rep.h_value >= 0.05


def test_candidate_domain():
    with pytest.raises(DomainError):
        near_center_candidate(0.5, 1.1)
    with pytest.raises(DomainError):
        near_center_candidate(0.1, 1.0)


def test_zero_potential_is_trivial():
    assert unscaled_h(0.0) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(DomainError):
        minimize_rate(0.0)


def test_quadratic_limit(small_lam_runs):
    out = small_lam_runs[(0.05, "upper")]
    assert out.converged
    assert out.rate_value / 0.05 ** 2 == pytest.approx(QUAD, rel=0.03)


def test_lower_tail_not_above_candidate(small_lam_runs):
    out = small_lam_runs[(0.1, "lower")]
    assert out.rate_value <= 1.02 * 0.01 * QUAD
    assert out.rate_value == pytest.approx(phi_exact(-0.1).value, rel=1e-2)


def test_constraint_and_stationarity(small_lam_runs):
    for (lam, tail), out in small_lam_runs.items():
        assert out.converged, (lam, tail)
        assert abs(out.constraint_value - out.target) <= 1e-3
        assert out.stationarity < 1e-3
        assert out.rate_value >= 0
        assert (out.multiplier < 0) == (tail == "lower")


def test_lower_tail_sign_structure(small_lam_runs):
    for lam in (0.05, 0.1, 0.2):
        assert np.max(small_lam_runs[(lam, "lower")].rho_opt.values) <= 1e-6


def test_rate_monotone_in_lam(small_lam_runs):
    for tail in ("lower", "upper"):
        rates = [small_lam_runs[(lam, tail)].rate_value for lam in (0.05, 0.1, 0.2)]
        assert rates == sorted(rates)


def test_scaled_instanton_feasible_for_large_lam():
    frame = BridgeFrame(100.0, s_min=1e-8)
    g = frame.grid
    boosted = ScalarField(g, 1.1 * rho_star(g.tt, g.x))
    assert scaled_h(boosted, 100.0, frame) < -1.0


def test_near_center_field_vanishes_off_interval():
    f = near_center_field(0.1)
    assert f(np.array([0.0, 2.0, 2.5]), np.zeros(3)).tolist() == [0.0, 0.0, 0.0]


@pytest.mark.slow
def test_two_routes_agree_at_moderate_lam():
    unscaled = minimize_rate(10.0, "lower")
    scaled = deep_tail_scaled_value(10.0, BridgeFrame(10.0, s_min=1e-8))
    assert unscaled.converged and scaled.converged
    assert scaled.rate_value * 10.0 ** 2.5 == pytest.approx(unscaled.rate_value, rel=0.05)
    assert unscaled.rate_value == pytest.approx(phi_exact(-10.0).value, rel=0.01)
