import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpz_ldp.deviation_field import instanton_grid, rho_star, rho_star_field
from kpz_ldp.errors import ConfigurationError, DomainError
from kpz_ldp.fields import ScalarField, SpaceTimeGrid, as_sampler, sample_on, uniform_grid
from kpz_ldp.pde_solver import frame_grid


def bump(t, x):
    return np.exp(-(t - 1) ** 2 - x ** 2)


def test_uniform_grid_shape_and_weights():
    g = uniform_grid(5, 9, 2.0)
    assert g.shape == (5, 9)
    assert g.is_uniform and g.L == 2.0
    assert g.weights.sum() == pytest.approx(2.0 * 4.0)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        SpaceTimeGrid([0, 1], [1, 1], [0, 1, 0.5], [1, 1, 1], [1, 1])
    with pytest.raises(ConfigurationError):
        SpaceTimeGrid([0, 1], [1, 1], [0, 1], [1, 1], [1, -1])
    with pytest.raises(ConfigurationError):
        ScalarField(uniform_grid(3, 3, 1.0), np.zeros((2, 3)))
    with pytest.raises(DomainError):
        ScalarField(uniform_grid(3, 3, 1.0), np.full((3, 3), np.nan))


def test_fields_are_immutable():
    f = uniform_grid(4, 5, 1.0).sample(bump)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


@given(st.floats(0.0, 2.0), st.floats(-3.0, 3.0))
def test_interpolation_exact_for_bilinear(t, x):
    g = uniform_grid(11, 41, 4.0)
    f = g.sample(lambda t, x: 2 * t + 3 * x + 1)
    assert f(t, x) == pytest.approx(2 * t + 3 * x + 1, abs=1e-12)


def test_interpolation_zero_outside_and_on_stretched_slices():
    g = uniform_grid(11, 41, 4.0)
    f = g.sample(lambda t, x: np.ones_like(t + x))
    assert f(1.0, 5.0) == 0.0
    star = rho_star_field(instanton_grid(n_t=400, n_xi=129))
    assert star(0.7, 0.1) == pytest.approx(rho_star(0.7, 0.1), abs=1e-4)


def test_arithmetic_and_inner_product():
    g = uniform_grid(21, 41, 3.0)
    f = g.sample(bump)
    assert (f + f).values == pytest.approx((2 * f).values)
    assert (f - f).norm() == 0.0
    assert f.dot(f) == pytest.approx(f.norm() ** 2)
    other = uniform_grid(21, 43, 3.0).sample(bump)
    with pytest.raises(ConfigurationError):
        f + other


@pytest.mark.parametrize("grid", [uniform_grid(7, 9, 3.0), instanton_grid(n_t=12, n_xi=9),
                                  frame_grid(lam=2.0, s_min=1e-3, dtau=0.05, dxi=0.1)])
def test_csv_round_trip(tmp_path, grid):
    f = grid.sample(bump)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("# kpz-ldp scalar-field v1")
    json.loads(header.split("v1", 1)[1])
    back = ScalarField.from_csv(path)
    assert back.grid.same_as(grid)
    assert np.array_equal(back.values, f.values)


def test_binary_round_trip(tmp_path):
    f = uniform_grid(9, 17, 2.5).sample(bump)
    path = tmp_path / "f.kpzf"
    f.to_binary(path)
    assert path.read_bytes()[:4] == b"KPZF"
    assert path.stat().st_size == 24 + 8 * 9 * 17
    back = ScalarField.from_binary(path)
    assert np.array_equal(back.values, f.values)
    with pytest.raises(ConfigurationError):
        rho_star_field(instanton_grid(n_t=4, n_xi=5)).to_binary(tmp_path / "g.kpzf")


def test_binary_rejects_corruption(tmp_path):
    path = tmp_path / "bad.kpzf"
    path.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ConfigurationError):
        ScalarField.from_binary(path)


def test_samplers():
    g = uniform_grid(3, 5, 1.0)
    assert np.all(sample_on(0.5, g) == 0.5)
    assert as_sampler(2.0)(np.zeros(3), np.zeros(3)).tolist() == [2.0, 2.0, 2.0]
    f = g.sample(bump)
    assert sample_on(f, g) is f.values
