import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftmon.bounds import (
    LabelSample,
    certify_risk,
    confidence_interval,
    hoeffding_biased_tail,
    hoeffding_deviation,
    psi,
    tolerance_constants,
)
from driftmon.errors import ConfigurationError, ValidationError


def test_psi_examples():
    assert psi(LabelSample([8, 9, 10], [1, 0, 1], now=10), 0.01) == pytest.approx(0.01)
    assert psi(LabelSample([5, 6], [1, 1], now=6), 0.5) == pytest.approx(0.25)
    assert psi(LabelSample([10], [1], now=10), 0.3) == 0.0
    assert psi(LabelSample([0], [1], now=100), 1e-3) == pytest.approx(0.1)


def test_label_sample_validation():
    with pytest.raises(ValidationError):
        LabelSample([2, 1], [0, 1], now=3)
    with pytest.raises(ValidationError):
        LabelSample([1], [2], now=3)
    with pytest.raises(ValidationError):
        LabelSample([5], [1], now=3)
    with pytest.raises(ValidationError):
        psi(LabelSample([], [], now=3), 0.1)


@given(st.lists(st.integers(0, 500), min_size=1, max_size=20, unique=True), st.integers(1, 50))
def test_psi_monotone_in_age(times, shift):
    times = sorted(times)
    now = times[-1] + 1
    base = LabelSample(times, [1] * len(times), now)
    moved = [times[0] - shift] + times[1:]  # the oldest label gets older
    older = LabelSample(moved, [1] * len(times), now)
    assert psi(older, 0.01) >= psi(base, 0.01)


def test_biased_tail_values():
    assert hoeffding_biased_tail(10, 0.0) == 1.0
    mpmath.mp.dps = 30
    assert hoeffding_biased_tail(100, 0.1) == pytest.approx(float(2 * mpmath.exp(-2)), rel=1e-14)
    assert round(hoeffding_biased_tail(100, 0.1), 5) == 0.27067
    assert hoeffding_biased_tail(1349, 0.1 / 3) <= 0.1


def test_deviation_inverts_tail():
    for n in (10, 100, 1349):
        for tail in (0.01, 0.1, 0.5):
            assert hoeffding_biased_tail(n, hoeffding_deviation(n, tail)) == pytest.approx(tail, rel=1e-12)


def test_interval_half_width_design_point():
    s = LabelSample(range(1349), [1, 0] * 674 + [1], now=1348)
    lo, hi = confidence_interval(s, 0.0, 0.9)
    mpmath.mp.dps = 30
    ref = float(mpmath.sqrt(mpmath.log(20) / 2698))
    assert (hi - lo) / 2 == pytest.approx(ref, rel=1e-12)
    assert round(ref, 4) == 0.0333


def test_interval_clamps():
    s = LabelSample(range(50), [1] * 49 + [0], now=49)
    lo, hi = confidence_interval(s, 0.0, 0.5)
    assert hi == 1.0 and lo < 0.98


def test_interval_shrinks_with_n():
    widths = []
    for n in (10, 100, 1000, 100_000):
        s = LabelSample(range(n), [1, 0] * (n // 2), now=n - 1)
        lo, hi = confidence_interval(s, 0.0, 0.9)
        widths.append(hi - lo)
    assert widths == sorted(widths, reverse=True)
    assert widths[-1] < 0.01


def test_certify_design_point_passes():
    n, alpha = tolerance_constants(0.1, 1e-6)
    cert = certify_risk(0.1, 1e-6, n, alpha)
    assert cert.passed
    assert cert.psi_max == pytest.approx(1e-6 * n * alpha + 1e-6 * (n + 1) / 2)
    assert cert.psi_max + cert.deviation <= 0.1
    assert cert.tail <= 0.1 + 1e-15


def test_certify_fails_with_faster_drift():
    n, alpha = tolerance_constants(0.1, 1e-6)
    cert = certify_risk(0.1, 1e-4, n, alpha)
    assert not cert.passed
    assert cert.psi_max + cert.deviation > 0.1


def test_certify_no_drift():
    cert = certify_risk(0.1, 0.0, 1349, 1e9)
    assert cert.passed and cert.psi_max == 0.0


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_certify_at_regime_boundary(eps):
    delta = eps**3 / (10 * math.log(2 / eps))
    n, alpha = tolerance_constants(eps, delta)
    assert certify_risk(eps, delta, n, alpha).passed


def test_certify_margin_allows_more_bias():
    n, alpha = tolerance_constants(0.1, 1e-6)
    assert not certify_risk(0.1, 1e-6, n, alpha, beta=200).passed
    assert certify_risk(0.1, 1e-6, n, alpha, beta=200, margin=0.4).passed


def test_tolerance_constants_validation():
    with pytest.raises(ConfigurationError):
        tolerance_constants(0.0, 1e-6)
    with pytest.raises(ConfigurationError):
        tolerance_constants(0.1, 0.0)


def test_biased_hoeffding_monte_carlo_small():
    rng = np.random.default_rng(0)
    n, d, trials = 50, 0.1, 20_000
    bias = np.linspace(-0.1, 0.1, n)
    p = 0.5
    ps = np.clip(p + bias, 0, 1)
    psi_val = np.abs(bias).mean()
    means = (rng.random((trials, n)) < ps).mean(axis=1)
    freq = np.mean(np.abs(means - p) >= d + psi_val)
    bound = hoeffding_biased_tail(n, d)
    assert freq <= bound + 3 * math.sqrt(bound * (1 - bound) / trials)
