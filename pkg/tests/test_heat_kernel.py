import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpz_ldp.errors import DomainError
from kpz_ldp.heat_kernel import (OVERLAP_EXACT, eval_kernel, kernel_normalization, kernel_overlap_integral,
                                 overlap_integrand, trapezoid_weights)

times = st.floats(0.01, 2.0)
positions = st.floats(-5.0, 5.0)


def test_closed_form_values():
    assert eval_kernel(1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert eval_kernel(2.0, 0.0) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-15)


def test_extended_precision_oracle():
    mpmath.mp.dps = 40
    exact = mpmath.exp(-mpmath.mpf("1.3") ** 2 / (2 * mpmath.mpf("0.5"))) / mpmath.sqrt(2 * mpmath.pi * mpmath.mpf("0.5"))
    assert abs(eval_kernel(0.5, 1.3) - float(exact)) < 1e-14


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_nonpositive_time_rejected(t):
    with pytest.raises(DomainError):
        eval_kernel(t, 0.0)


@given(times, positions)
def test_even_and_positive(t, x):
    assert eval_kernel(t, x) == eval_kernel(t, -x)
    if x * x / (2 * t) < 700:  # below that exp underflows in double precision
        assert eval_kernel(t, x) > 0


@given(times, times)
def test_decreasing_at_origin(a, b):
    if a < b:
        assert eval_kernel(a, 0.0) > eval_kernel(b, 0.0)


@pytest.mark.parametrize("t, L", [(1.0, 8.0), (2.0, 10.0)])
def test_normalization(t, L):
    res = kernel_normalization(t, L=L)
    assert abs(res.value - 1.0) < 1e-10
    assert not res.mass_warning


def test_normalization_short_window_warns():
    res = kernel_normalization(2.0, L=1.0)
    assert res.mass_warning
    assert res.value == pytest.approx(math.erf(0.5), abs=1e-5)


def test_trapezoid_weights_integrate_linear_exactly():
    w = trapezoid_weights(11, 0.1)
    x = np.linspace(0, 1, 11)
    assert np.dot(w, 3 * x + 1) == pytest.approx(2.5, abs=1e-14)


@given(st.floats(0.2, 1.8), st.floats(0.3, 1.9), st.floats(-2.5, 2.5))
def test_semigroup(frac, t, x):
    s = frac * t / 2.0
    y = np.linspace(-20, 20, 16001)
    w = trapezoid_weights(y.size, y[1] - y[0])
    conv = np.dot(w, eval_kernel(t - s, x - y) * eval_kernel(s, y))
    assert abs(conv - eval_kernel(t, x)) < 1e-8


def test_overlap_identity_and_refinement():
    value = kernel_overlap_integral()
    assert abs(value - OVERLAP_EXACT) < 1e-6
    finer = kernel_overlap_integral(n_angle=512, dx=1 / 512)
    assert abs(finer - value) < 1e-8


def test_overlap_integrand_centre():
    assert overlap_integrand(1.0, 0.0) == pytest.approx((2 * math.pi) ** -2, rel=1e-14)
