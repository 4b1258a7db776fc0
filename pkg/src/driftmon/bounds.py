"""Concentration bounds for label windows drawn from a drifting stream.

A window of labels observed at times ``i`` and used to estimate the accuracy
at time ``now`` is biased by at most ``delta_lip * |now - i|`` per label.
Hoeffding's inequality still applies once the average bias ``psi`` is added
to the deviation:

    P(|mean - p| >= delta + psi) <= 2 exp(-2 n delta^2)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigurationError, ValidationError


@dataclass(frozen=True)
class LabelSample:
    times: tuple[int, ...]
    outcomes: tuple[int, ...]
    now: int

    def __init__(self, times: Sequence[int], outcomes: Sequence[int], now: int):
        object.__setattr__(self, "times", tuple(int(t) for t in times))
        object.__setattr__(self, "outcomes", tuple(int(o) for o in outcomes))
        object.__setattr__(self, "now", int(now))
        if len(self.times) != len(self.outcomes):
            raise ValidationError("times and outcomes differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValidationError("label times must be strictly increasing")
        if self.times and self.times[-1] > self.now:
            raise ValidationError("label times must not exceed now")
        if any(o not in (0, 1) for o in self.outcomes):
            raise ValidationError("outcomes must be 0 or 1")

    def __len__(self) -> int:
        return len(self.times)

    def mean(self) -> float:
        return sum(self.outcomes) / len(self.outcomes)


def psi(sample: LabelSample, delta_lip: float) -> float:
    """Worst-case average drift bias ``delta_lip * mean(|now - i|)``."""
    if len(sample) == 0:
        raise ValidationError("psi of an empty label sample")
    return delta_lip * sum(abs(sample.now - t) for t in sample.times) / len(sample)


def hoeffding_biased_tail(n: int, delta_conf: float) -> float:
    if n < 1:
        raise ValidationError("n must be >= 1")
    if delta_conf < 0:
        raise ValidationError("deviation must be >= 0")
    return min(1.0, 2.0 * math.exp(-2.0 * n * delta_conf * delta_conf))


def hoeffding_deviation(n: int, tail: float) -> float:
    """Smallest ``delta`` with ``2 exp(-2 n delta^2) <= tail``."""
    if not 0 < tail:
        return math.inf
    return math.sqrt(max(math.log(2.0 / tail), 0.0) / (2.0 * n))


def confidence_interval(sample: LabelSample, delta_lip: float, confidence_level: float) -> tuple[float, float]:
    """Interval ``mean +- (psi + delta)`` clipped to ``[0, 1]``.

    ``delta`` solves ``2 exp(-2 n delta^2) = 1 - confidence_level``.
    """
    if len(sample) == 0:
        raise ValidationError("confidence interval of an empty label sample")
    if not 0.0 <= confidence_level <= 1.0:
        raise ValidationError("confidence level must lie in [0, 1]")
    half = psi(sample, delta_lip) + hoeffding_deviation(len(sample), 1.0 - confidence_level)
    m = sample.mean()
    return max(0.0, m - half), min(1.0, m + half)


def tolerance_constants(epsilon: float, delta: float) -> tuple[int, float]:
    """Window ``n`` and idle multiplier ``alpha`` guaranteeing expected risk ``epsilon``.

    ``n = ceil(9 ln(2/eps) / (2 eps^2))`` and
    ``alpha = eps^3 / (15 delta ln(2/eps))``.  Warns if ``delta`` is above
    ``eps^3 / (10 ln(2/eps))``, beyond which the guarantee is not proven.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not delta > 0.0:
        raise ConfigurationError(f"delta must be > 0, got {delta}")
    log_term = math.log(2.0 / epsilon)
    n = math.ceil(9.0 * log_term / (2.0 * epsilon**2))
    alpha = epsilon**3 / (15.0 * delta * log_term)
    bound = epsilon**3 / (10.0 * log_term)
    if delta > bound:
        warnings.warn(
            f"delta={delta:g} exceeds eps^3/(10 ln(2/eps)) = {bound:.4g}; "
            "the risk guarantee for these constants does not hold",
            RuntimeWarning,
            stacklevel=2,
        )
    return n, alpha


@dataclass(frozen=True)
class RiskCertificate:
    passed: bool
    psi_max: float
    deviation: float
    tolerance: float
    tail: float
    epsilon: float
    bias_slack: float
    tail_slack: float


def certify_risk(
    epsilon: float,
    delta: float,
    n: int,
    alpha: float,
    beta: float = 0.0,
    margin: float = 0.0,
) -> RiskCertificate:
    """Check the sufficient conditions for expected risk ``<= epsilon``.

    The oldest label in use is at most ``n (alpha + beta + 1)`` steps old, so
    the bias obeys ``psi_max < delta n (alpha + beta) + delta (n + 1) / 2``.
    With ``d`` the smallest deviation whose tail ``2 exp(-2 n d^2)`` is at
    most ``epsilon``, the certificate passes when ``psi_max + d`` fits within
    the tolerance ``max(margin, epsilon)`` (an estimate farther than
    ``epsilon`` from the decision threshold may err by up to that margin
    without changing the decision).
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if delta == 0:
        psi_max = 0.0
    else:
        psi_max = delta * n * (alpha + beta) + delta * (n + 1) / 2.0
    dev = hoeffding_deviation(n, epsilon)
    tail = hoeffding_biased_tail(n, dev)
    tolerance = max(margin, epsilon)
    bias_slack = tolerance - (psi_max + dev)
    tail_slack = epsilon - tail
    return RiskCertificate(
        passed=bias_slack >= 0 and tail_slack >= -1e-15,
        psi_max=psi_max,
        deviation=dev,
        tolerance=tolerance,
        tail=tail,
        epsilon=epsilon,
        bias_slack=bias_slack,
        tail_slack=tail_slack,
    )
