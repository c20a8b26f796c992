import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpz_ldp.deviation_field import rho_star
from kpz_ldp.errors import ConfigurationError, DomainError
from kpz_ldp.fields import ScalarField
from kpz_ldp.heat_kernel import eval_kernel
from kpz_ldp.pde_solver import (BridgeFrame, chaos_ratios, chaos_sum, feynman_kac_mc, scaled_h, unscaled_h)
from kpz_ldp.pde_solver.config import SchemeParams, load_params, params_from_mapping, parse_key_values
from kpz_ldp.pde_solver.physical import gradient_h, solve_forward
from kpz_ldp.variational_optimizer import near_center_field

SMALL = SchemeParams(nt=129, nx=201, L=10.0)


def bump(t, x):
    return 0.5 * np.exp(-(t - 1) ** 2 / 0.2 - x ** 2 / 0.5)


# physical-coordinate solver


def test_free_solution_is_heat_kernel():
    res = solve_forward(0.0, SMALL)
    assert abs(res.h) < 1e-3
    t = res.z_field.grid.t[-1]
    assert res.z_field(t, 1.0) == pytest.approx(eval_kernel(2.0, 1.0), rel=1e-2)


@pytest.mark.parametrize("c", [0.5, -0.5])
def test_constant_potential(c):
    assert solve_forward(c, SMALL).h == pytest.approx(2 * c, abs=1e-3)


def test_second_order_convergence():
    hs = [solve_forward(bump, SchemeParams(nt=nt, nx=nx, L=10.0)).h
          for nt, nx in [(65, 101), (129, 201), (257, 401), (513, 801)]]
    diffs = np.abs(np.diff(hs))
    ratios = diffs[:-1] / diffs[1:]
    assert np.all(ratios > 3.5), ratios


def test_positivity_and_diagnostics():
    res = solve_forward(bump, SMALL)
    assert res.diagnostics["negative_nodes"] == 0
    assert not res.diagnostics["mass_warning"]
    assert res.ratio == pytest.approx(math.exp(res.h))


def test_mass_loss_warning_on_narrow_box():
    with pytest.warns(RuntimeWarning, match="mass loss"):
        solve_forward(0.0, SchemeParams(nt=65, nx=41, L=3.0))


def test_explicit_scheme_stability_error():
    with pytest.raises(ConfigurationError):
        solve_forward(0.0, SchemeParams(nt=65, nx=401, L=10.0, theta=0.0))


def test_scheme_params_validation():
    with pytest.raises(ConfigurationError):
        SchemeParams(nx=100)
    with pytest.raises(ConfigurationError):
        SchemeParams(t0=0.5)


def test_config_parsing(tmp_path):
    text = "# grid\nnt = 129\nnx = 201  # odd\nL = 8\ncomment_free_key = 1\n"
    assert parse_key_values(text)["L"] == "8"
    path = tmp_path / "solver.cfg"
    path.write_text(text)
    p = load_params(path)
    assert (p.nt, p.nx, p.L) == (129, 201, 8.0)
    with pytest.raises(ConfigurationError):
        params_from_mapping({"nt": "12.5"})
    with pytest.raises(ConfigurationError):
        params_from_mapping({"L": "wide"})
    with pytest.raises(ConfigurationError):
        parse_key_values("nt 12")


def test_free_gradient_is_bridge_density():
    G = gradient_h(0.0, SchemeParams(nt=257, nx=401, L=10.0))
    g = G.grid
    inner = (g.t > 0.1) & (g.t < 1.9)
    s = g.t[inner][:, None]
    exact = eval_kernel(2.0 - s, g.xi[None, :]) * eval_kernel(s, g.xi[None, :]) / eval_kernel(2.0, 0.0)
    assert np.max(np.abs(G.values[inner] - exact)) < 1e-2 * exact.max()
    assert np.sum(G.values * g.weights) == pytest.approx(2.0, abs=1e-3)


# bridge frame


def test_frame_free_and_constant():
    frame = BridgeFrame(1.0, reach=0.0)
    assert abs(unscaled_h(0.0, frame)) < 1e-10
    assert unscaled_h(0.3, frame) == pytest.approx(0.6, abs=1e-3)


def test_frame_matches_physical_solver():
    assert unscaled_h(bump) == pytest.approx(solve_forward(bump).h, abs=1e-4)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_frame_monotone_in_potential(a, b):
    frame = BridgeFrame(1.0, reach=0.0, dtau=0.05, dxi=0.1)
    lo, hi = sorted((a, b))
    assert unscaled_h(lambda t, x: lo * bump(t, x), frame) <= unscaled_h(lambda t, x: hi * bump(t, x), frame) + 1e-12


def test_scaled_at_unit_lam_is_unscaled():
    assert scaled_h(rho_star, 1.0) == pytest.approx(unscaled_h(rho_star), abs=1e-10)


def test_scaled_deep_tail_example():
    # the scaled solution under rho* should approach -1 as lam grows
    h = scaled_h(rho_star, 40.0, BridgeFrame(40.0, s_min=1e-8))
    assert h == pytest.approx(-1.0, abs=0.05)


def test_frame_rejects_coarse_xi():
    with pytest.raises(ConfigurationError):
        BridgeFrame(1.0, dxi=0.2)
    with pytest.raises(DomainError):
        scaled_h(rho_star, 0.5)


def test_frame_gradient_matches_finite_difference():
    frame = BridgeFrame(1.0, reach=0.0, dtau=0.02, dxi=0.05)
    g = frame.grid
    rho = ScalarField(g, bump(g.tt, g.x))
    chi = ScalarField(g, np.sin(g.tt) * np.exp(-g.x ** 2))
    grad = frame.solve(rho, gradient=True).gradient
    e = 1e-5
    fd = (frame.solve(rho + e * chi).h - frame.solve(rho - e * chi).h) / (2 * e)
    assert grad.dot(chi) == pytest.approx(fd, rel=1e-6)


# chaos expansion


def test_chaos_zeroth_and_first_order():
    assert chaos_ratios(bump, 0) == [1.0]
    # psi_1 of the product kernel is lam kappa in closed form
    psi = chaos_ratios(near_center_field(0.2, 1.5), 1)
    assert psi[1] == pytest.approx(0.3, abs=1e-5)


def test_chaos_second_order_constant():
    c = 0.3
    assert chaos_ratios(c, 2)[2] == pytest.approx((2 * c) ** 2 / 2, rel=1e-6)


def test_chaos_sum_matches_pde():
    assert chaos_sum(bump, 4) == pytest.approx(math.exp(unscaled_h(bump)), rel=1e-4)
    with pytest.raises(DomainError):
        chaos_ratios(bump, 5)


# Monte Carlo bridges


def test_mc_free_and_constant():
    free = feynman_kac_mc(0.0, n_paths=1000)
    assert free.mean == 1.0 and free.stderr == 0.0
    const = feynman_kac_mc(0.25, n_paths=1000)
    assert const.mean == pytest.approx(math.exp(0.5), rel=1e-12)


def test_mc_matches_pde_for_rho_star():
    est = feynman_kac_mc(rho_star, n_paths=40_000, n_steps=800, grading="graded", seed=3)
    assert est.within(math.exp(unscaled_h(rho_star)), 3.0)


def test_mc_reproducible_across_workers():
    a = feynman_kac_mc(bump, n_paths=10_000, seed=5, workers=1)
    b = feynman_kac_mc(bump, n_paths=10_000, seed=5, workers=3)
    assert a == b
    assert feynman_kac_mc(bump, n_paths=10_000, seed=6) != a
