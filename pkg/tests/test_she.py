import math

import numpy as np
import pytest

from kpz_ldp.errors import DomainError
from kpz_ldp.heat_kernel import eval_kernel
from kpz_ldp.she_simulator import (SQRT_4PI, TAIL_COLUMNS, SheConfig, estimate_tail, halving_pair, read_tail_csv,
                                   run_ensemble, simulate_she, tail_tilt, write_tail_csv)
from kpz_ldp.fields import ScalarField

COARSE = SheConfig(L=4.0, dx=1.0 / 8.0, dt=1.0 / 64.0, t0=1.0 / 16.0, block=512)


def at_origin(z):
    return z[:, int(np.argmin(np.abs(COARSE.x)))]


def test_deterministic_limit():
    sample = simulate_she(1e-12, seed=0)
    assert sample.valid and sample.log_weight == 0.0
    assert SQRT_4PI * sample.z_end == pytest.approx(1.0, abs=1e-5)
    f = sample.field
    assert f(1.0, 0.5) == pytest.approx(eval_kernel(1.0, 0.5), rel=1e-5)


def test_sample_field_round_trips(tmp_path):
    sample = simulate_she(0.1, seed=4, config=COARSE)
    path = tmp_path / "z.csv"
    sample.field.to_csv(path)
    assert np.array_equal(ScalarField.from_csv(path).values, sample.field.values)


def test_mean_is_heat_kernel():
    ens = run_ensemble(0.1, 10_000, seed=1, config=COARSE)
    assert ens.estimate(at_origin).within(eval_kernel(2.0, 0.0), 3.0)


def test_tilted_weights_average_to_one():
    ens = run_ensemble(0.1, 4000, tilt=tail_tilt(0.5), seed=2, config=COARSE)
    assert ens.estimate(lambda z: np.ones(z.shape[0])).within(1.0, 3.0)
    plain = run_ensemble(0.1, 4000, seed=3, config=COARSE)
    a, b = ens.estimate(at_origin), plain.estimate(at_origin)
    assert abs(a.mean - b.mean) <= 3.0 * math.hypot(a.stderr, b.stderr)


def test_halving_dt_is_consistent():
    coarse, fine = halving_pair(0.1, 10_000, seed=1, config=COARSE)
    a, b = coarse.estimate(at_origin), fine.estimate(at_origin)
    assert abs(a.mean - b.mean) < min(a.stderr, b.stderr)


def test_reproducible_across_workers():
    a = run_ensemble(0.1, 1500, tilt=tail_tilt(0.5), seed=9, config=COARSE, workers=1)
    b = run_ensemble(0.1, 1500, tilt=tail_tilt(0.5), seed=9, config=COARSE, workers=3)
    assert np.array_equal(a.z_end, b.z_end) and np.array_equal(a.weights, b.weights)


def test_nonpositive_factors_are_counted():
    ens = run_ensemble(0.1, 1000, tilt=-70.0, seed=0, config=COARSE)
    assert ens.n_invalid > 0
    assert ens.n + ens.n_invalid == 1000


def test_typical_event():
    est = estimate_tail(0.1, 0.0, 2000, tilt="none", seed=5, config=COARSE)
    assert 0.3 < est.probability.mean < 0.8
    assert est.log_rate < 0.1
    assert est.ess <= est.probability.n


def test_tilting_reduces_variance():
    plain = estimate_tail(0.05, 0.5, 2000, tilt="none", seed=6, config=COARSE)
    tilted = estimate_tail(0.05, 0.5, 2000, tilt="instanton", seed=6, config=COARSE)
    assert tilted.probability.stderr < plain.probability.stderr
    assert 0 < tilted.probability.mean <= 1 and tilted.ess <= tilted.probability.n


def test_low_ess_flag():
    est = estimate_tail(0.01, 2.0, 1000, tilt="none", seed=0, config=COARSE)
    assert est.low_confidence and "low-ess" in est.record()["flags"]


def test_domain_errors():
    with pytest.raises(DomainError):
        simulate_she(0.3)
    with pytest.raises(DomainError):
        estimate_tail(0.1, 0.5, 500)
    with pytest.raises(DomainError):
        estimate_tail(0.1, 0.5, 1000, tilt="mystery")
    with pytest.raises(DomainError):
        SheConfig(dx=1.0 / 16.0, dt=0.1)
    with pytest.raises(DomainError):
        tail_tilt(1.0, "sideways")


def test_tail_csv_round_trip(tmp_path):
    est = estimate_tail(0.1, 0.5, 1000, seed=8, config=COARSE)
    path = tmp_path / "tail.csv"
    write_tail_csv(path, [est])
    lines = path.read_text().splitlines()
    assert lines[0] == "# kpz-ldp she-tail v1" and lines[1] == ",".join(TAIL_COLUMNS)
    (row,) = read_tail_csv(path)
    assert row["prob"] == est.probability.mean and row["tail"] == "lower"
