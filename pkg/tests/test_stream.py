import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftmon.errors import ConfigurationError, LipschitzViolationError, ParseError, ValidationError
from driftmon.stream import (
    DriftSpec,
    StreamEvent,
    adversarial_schedule,
    block_bootstrap,
    generate,
    gen_adversarial_rr,
    gen_piecewise,
    gen_random_walk,
    gen_rotating_clusters,
    moving_average_truth,
    random_walk_path,
    replay_csv,
    write_csv,
)


def mu_of(events):
    return np.array([e.true_accuracy for e in events])


def max_step(events):
    return float(np.max(np.abs(np.diff(mu_of(events)))))


# -- events and specs --------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(outcome=2, confidence=0.5), dict(outcome=1, confidence=1.5), dict(outcome=1, confidence=0.5, true_accuracy=-0.1)],
)
def test_event_validation(kwargs):
    with pytest.raises(ValidationError):
        StreamEvent(t=0, **kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="nope"), dict(kind="random_walk", delta=1.5), dict(kind="random_walk", mu0=-0.1),
     dict(kind="random_walk", horizon=0)],
)
def test_driftspec_validation(kwargs):
    with pytest.raises(ConfigurationError):
        generate(DriftSpec(**kwargs))


# -- random walk -------------------------------------------------------------


def test_random_walk_zero_drift_is_constant():
    ev = gen_random_walk(DriftSpec("random_walk", delta=0.0, horizon=5, mu0=0.8))
    assert mu_of(ev).tolist() == [0.8] * 5


def test_random_walk_recurrence_without_clamp():
    assert random_walk_path(1.0, [-0.7])[1] == pytest.approx(0.3)


def test_random_walk_clamps_to_unit_interval():
    path = random_walk_path(0.95, [0.1, -0.5, -0.6, -0.2])
    assert path.tolist() == pytest.approx([0.95, 1.0, 0.5, 0.0, 0.0])


def test_random_walk_lipschitz_long_run():
    ev = gen_random_walk(DriftSpec("random_walk", delta=0.01, horizon=100_000, mu0=0.5, seed=3))
    assert len(ev) == 100_000
    assert max_step(ev) <= 0.01


def test_random_walk_is_deterministic():
    spec = DriftSpec("random_walk", delta=0.01, horizon=500, mu0=0.5, seed=11)
    assert gen_random_walk(spec) == gen_random_walk(spec)
    other = DriftSpec("random_walk", delta=0.01, horizon=500, mu0=0.5, seed=12)
    assert gen_random_walk(spec) != gen_random_walk(other)


@pytest.mark.slow
def test_random_walk_covers_unit_interval():
    # the clamped walk mixes towards the uniform law; every decile gets mass
    ev = gen_random_walk(DriftSpec("random_walk", delta=0.05, horizon=1_000_000, mu0=0.5, seed=0))
    hist, _ = np.histogram(mu_of(ev), bins=10, range=(0.0, 1.0))
    assert (hist / len(ev) > 0.01).all()


# -- piecewise ---------------------------------------------------------------


def test_piecewise_constant():
    ev = gen_piecewise(DriftSpec("piecewise_linear", delta=0.0, horizon=101, params={"waypoints": [(0, 0.9), (100, 0.9)]}))
    assert set(mu_of(ev).tolist()) == {0.9}


def test_piecewise_interpolates():
    ev = gen_piecewise(DriftSpec("piecewise_linear", delta=0.005, horizon=101, params={"waypoints": [(0, 0.9), (100, 0.4)]}))
    assert ev[50].true_accuracy == pytest.approx(0.65)
    assert max_step(ev) <= 0.005


def test_piecewise_rejects_steep_segment():
    with pytest.raises(LipschitzViolationError):
        gen_piecewise(DriftSpec("piecewise_linear", delta=0.005, horizon=20, params={"waypoints": [(0, 0.9), (10, 0.4)]}))


# -- adversarial -------------------------------------------------------------


def test_adversarial_ramp_length():
    head, start, end = adversarial_schedule(0.01, 75)
    assert head == 100
    assert (start, end) == (175, 275)


def test_adversarial_tail_is_frozen():
    ev = gen_adversarial_rr(DriftSpec("adversarial_rr", delta=0.01, horizon=600, mu0=0.9))
    tail = ev[100:]
    assert len({e.features for e in tail}) == 1
    assert len({e.confidence for e in tail}) == 1


def test_adversarial_reaches_one_half():
    ev = gen_adversarial_rr(DriftSpec("adversarial_rr", delta=0.005, horizon=2000, mu0=0.9))
    mu = mu_of(ev)
    assert mu.min() == pytest.approx(0.5)
    assert max_step(ev) <= 0.005
    _, start, _ = adversarial_schedule(0.005, 75)
    assert (mu[:start + 1] == 0.9).all()


def test_adversarial_v1_keeps_accuracy():
    ev = gen_adversarial_rr(DriftSpec("adversarial_rr", delta=0.005, horizon=1000, mu0=0.9, params={"v": 1}))
    assert set(mu_of(ev).tolist()) == {0.9}


# -- rotating clusters -------------------------------------------------------


def test_rotation_zero_keeps_accuracy_constant():
    ev = gen_rotating_clusters(DriftSpec("rotating_clusters", horizon=500, params={"rotation_rate": 0.0}))
    mu = mu_of(ev)
    assert np.ptp(mu) == 0.0
    assert 0.5 < mu[0] <= 1.0


def test_half_rotation_swaps_two_classes():
    T = 4000
    ev = gen_rotating_clusters(
        DriftSpec("rotating_clusters", horizon=T, seed=1, params={"n_clusters": 2, "rotation_rate": math.pi / T})
    )
    ma = moving_average_truth([e.outcome for e in ev], 100)
    assert ma[-1] < 0.5
    assert ma[150] > 0.5


def test_rotating_analytic_accuracy_matches_empirical():
    ev = gen_rotating_clusters(
        DriftSpec("rotating_clusters", horizon=20_000, seed=2, params={"rotation_rate": 2 * math.pi / 20_000})
    )
    mu = mu_of(ev)
    outcomes = np.array([e.outcome for e in ev], dtype=float)
    # blockwise empirical accuracy tracks the analytic value
    for lo in range(0, 20_000, 2000):
        assert outcomes[lo:lo + 2000].mean() == pytest.approx(mu[lo:lo + 2000].mean(), abs=0.04)


def test_rotating_step_change_is_small():
    ev = gen_rotating_clusters(DriftSpec("rotating_clusters", horizon=5000, params={"rotation_rate": 1e-4}))
    # measured bound for radius 2.5, sigma 1: about 0.25 accuracy per radian
    assert max_step(ev) < 1e-4


def test_rotating_rejects_degenerate():
    with pytest.raises(ConfigurationError):
        gen_rotating_clusters(DriftSpec("rotating_clusters", horizon=10, params={"radius": 0.0}))
    with pytest.raises(ConfigurationError):
        gen_rotating_clusters(DriftSpec("rotating_clusters", horizon=10, params={"n_clusters": 1}))


def test_rotating_without_analytic_truth():
    ev = gen_rotating_clusters(DriftSpec("rotating_clusters", horizon=50, params={"analytic": False}))
    assert all(e.true_accuracy is None for e in ev)


# -- Lipschitz over seeds ----------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), delta=st.floats(1e-4, 0.2))
def test_lipschitz_property(seed, delta):
    for kind, params in (("random_walk", {}), ("adversarial_rr", {})):
        ev = generate(DriftSpec(kind, delta=delta, horizon=400, mu0=0.9, seed=seed, params=params))
        assert max_step(ev) <= delta


# -- replay ------------------------------------------------------------------


def test_replay_roundtrip(tmp_path):
    ev = [StreamEvent(0, 1, 0.9, (1.0, 2.0)), StreamEvent(1, 0, 0.25, (0.5, -1.0)), StreamEvent(2, 1, 1.0, (0.0, 0.0))]
    p = tmp_path / "s.csv"
    write_csv(ev, p)
    back = replay_csv(p)
    assert len(back) == 3
    assert back == ev


def test_replay_reports_bad_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,outcome,confidence\n0,1,0.5\n1,0,1.5\n")
    with pytest.raises(ParseError) as err:
        replay_csv(p)
    assert err.value.line == 3
    assert isinstance(err.value, ValidationError)


def test_replay_bad_outcome(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,outcome,confidence\n0,2,0.5\n")
    with pytest.raises(ValidationError):
        replay_csv(p)


def test_replay_header_only(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,outcome,confidence\n")
    assert replay_csv(p) == []


@pytest.mark.parametrize("text", ["", "a,b,c\n", "t,outcome,confidence\n0,1\n", "t,outcome,confidence\nx,1,0.5\n"])
def test_replay_malformed(tmp_path, text):
    p = tmp_path / "s.csv"
    p.write_text(text)
    with pytest.raises(ParseError):
        replay_csv(p)


# -- bootstrap ---------------------------------------------------------------


def _events(n):
    return [StreamEvent(t, t % 2, 0.5) for t in range(n)]


def test_bootstrap_block_one_is_identity():
    ev = _events(20)
    assert block_bootstrap(ev, 1, seed=5) == ev


def test_bootstrap_permutes_within_blocks():
    ev = _events(16)
    out = block_bootstrap(ev, 8, seed=5)
    assert sorted(e.t for e in out[:8]) == list(range(8))
    assert sorted(e.t for e in out[8:]) == list(range(8, 16))
    assert block_bootstrap(ev, 8, seed=5) == out


@given(n=st.integers(0, 60), block=st.integers(1, 12), seed=st.integers(0, 1000))
def test_bootstrap_preserves_multiset(n, block, seed):
    ev = _events(n)
    out = block_bootstrap(ev, block, seed)
    assert sorted(out, key=lambda e: e.t) == ev


# -- moving average ----------------------------------------------------------


def test_moving_average_examples():
    assert moving_average_truth([1, 1, 0, 1], 2).tolist() == [1.0, 1.0, 0.5, 0.5]
    assert moving_average_truth([1] * 10, 4).tolist() == [1.0] * 10
    alt = moving_average_truth([1, 0] * 50, 10)
    assert alt[10:].tolist() == [0.5] * 90


@given(st.lists(st.integers(0, 1), min_size=1, max_size=80), st.integers(1, 20))
def test_moving_average_matches_window_mean(outcomes, w):
    ma = moving_average_truth(outcomes, w)
    for t in range(len(outcomes)):
        window = outcomes[max(0, t - w + 1): t + 1]
        assert ma[t] == pytest.approx(sum(window) / len(window))
        assert 0.0 <= ma[t] <= 1.0
