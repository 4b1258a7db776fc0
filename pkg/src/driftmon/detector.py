"""Sliding-window anomaly signals and their quantile-based modulation.

Signals compare the most recent ``m`` observations against the ``m`` before
them.  Test-based signals are reported as ``1 - p`` so that larger always
means more anomalous.  Until ``2m`` observations have arrived every signal is
0, which makes adaptive policies fall back to their neutral period.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import stdtr
from sortedcontainers import SortedList

from .errors import ConfigurationError, ValidationError

DETECTOR_KINDS = ("ks", "mean_shift", "embedding", "constant")

_KS_TERMS = 100


@dataclass
class DetectorState:
    window_len: int = 75
    recent: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise ConfigurationError("window_len must be positive")
        self.recent = deque(self.recent, maxlen=2 * self.window_len)

    def push(self, x) -> bool:
        """Append an observation; return True once both windows are full."""
        self.recent.append(x)
        return len(self.recent) == 2 * self.window_len

    def windows(self) -> tuple[np.ndarray, np.ndarray]:
        """``(older, newer)`` windows as arrays."""
        data = np.asarray(self.recent, dtype=float)
        m = self.window_len
        return data[:m], data[m:]


@dataclass(frozen=True)
class QuantileMap:
    phi_min: float = 1 / 8
    phi_max: float = 4.0

    def __post_init__(self) -> None:
        if not (0 < self.phi_min <= 1 <= self.phi_max):
            raise ConfigurationError(
                f"need 0 < phi_min <= 1 <= phi_max, got ({self.phi_min}, {self.phi_max})"
            )


class SignalHistory:
    """Sorted multiset of past signals supporting mid-rank queries in O(log n)."""

    def __init__(self, values: Sequence[float] = ()):
        self._values = SortedList()
        for v in values:
            self.add(v)

    def add(self, g: float) -> None:
        if not math.isfinite(g) or g < 0:
            raise ValidationError(f"signal must be a finite non-negative real, got {g!r}")
        self._values.add(g)

    def __len__(self) -> int:
        return len(self._values)

    def quantile(self, g: float) -> float:
        n = len(self._values)
        if n == 0:
            return 0.5
        below = self._values.bisect_left(g)
        ties = self._values.bisect_right(g) - below
        return (below + 0.5 * ties) / n


# --------------------------------------------------------------------------
# p-values


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, ``P(K > x)``.

    Alternating series ``2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)`` truncated at
    100 terms.  Below ``x = 0.2`` the series converges too slowly to be
    useful and the true value is within 1e-12 of 1, so 1 is returned.
    """
    if x <= 0.2:
        return 1.0
    total = 0.0
    for j in range(1, _KS_TERMS + 1):
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < 1e-300:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    d = ks_statistic(a, b)
    if d == 0.0:
        return 1.0
    n_eff = a.size * b.size / (a.size + b.size)
    return kolmogorov_sf(math.sqrt(n_eff) * d)


def welch_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Welch t-test p-value.

    With zero variance in both windows the test degenerates: equal means give
    p = 1, different means give p = 0.
    """
    na, nb = a.size, b.size
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1)) if na > 1 else 0.0
    vb = float(b.var(ddof=1)) if nb > 1 else 0.0
    se2 = va / na + vb / nb
    if se2 == 0.0:
        return 1.0 if ma == mb else 0.0
    tstat = (ma - mb) / math.sqrt(se2)
    denom = (va / na) ** 2 / max(na - 1, 1) + (vb / nb) ** 2 / max(nb - 1, 1)
    df = se2 * se2 / denom
    return float(min(1.0, 2.0 * stdtr(df, -abs(tstat))))


# --------------------------------------------------------------------------
# signals


def ks_signal(state: DetectorState, new_confidence: float) -> float:
    if not state.push(float(new_confidence)):
        return 0.0
    older, newer = state.windows()
    return 1.0 - ks_pvalue(older, newer)


def mean_shift_signal(state: DetectorState, new_confidence: float) -> float:
    if not state.push(float(new_confidence)):
        return 0.0
    older, newer = state.windows()
    return 1.0 - welch_pvalue(older, newer)


def embedding_distance_signal(state: DetectorState, new_feature_vector: Sequence[float]) -> float:
    """Scale-normalized distance between the two windows' mean vectors.

    Each coordinate of the mean difference is divided by the pooled
    within-window standard deviation (coordinates with zero spread are left
    unscaled) and the Euclidean norm is returned.
    """
    vec = np.asarray(new_feature_vector, dtype=float).ravel()
    if state.recent and len(state.recent[-1]) != vec.size:
        raise ValidationError(
            f"feature dimension changed from {len(state.recent[-1])} to {vec.size}"
        )
    if not state.push(vec):
        return 0.0
    older, newer = state.windows()
    diff = newer.mean(axis=0) - older.mean(axis=0)
    pooled = np.sqrt(0.5 * (older.var(axis=0, ddof=1) + newer.var(axis=0, ddof=1)))
    scale = np.where(pooled > 0, pooled, 1.0)
    return float(np.linalg.norm(diff / scale))


class Detector:
    """Stateful wrapper choosing a signal by name.

    ``constant`` ignores its input and emits ``value`` (default 0), i.e. an
    uninformative detector.
    """

    def __init__(self, kind: str = "ks", window_len: int = 75, value: float = 0.0):
        if kind not in DETECTOR_KINDS:
            raise ConfigurationError(f"unknown detector {kind!r}; expected one of {DETECTOR_KINDS}")
        self.kind = kind
        self.value = float(value)
        self.state = DetectorState(window_len)

    def update(self, confidence: float, features: Sequence[float] | None = None) -> float:
        if self.kind == "ks":
            return ks_signal(self.state, confidence)
        if self.kind == "mean_shift":
            return mean_shift_signal(self.state, confidence)
        if self.kind == "embedding":
            if features is None:
                raise ValidationError("embedding detector needs feature vectors")
            return embedding_distance_signal(self.state, features)
        return self.value


# --------------------------------------------------------------------------
# normalization


def quantile_normalize(history: SignalHistory | Sequence[float], g: float) -> float:
    """Mid-rank empirical CDF of ``g`` against ``history`` (0.5 when empty)."""
    if not isinstance(history, SignalHistory):
        h = np.asarray(history, dtype=float)
        if h.size == 0:
            return 0.5
        return float(((h < g).sum() + 0.5 * (h == g).sum()) / h.size)
    return history.quantile(g)


def modulation_factor(qmap: QuantileMap, q: float) -> float:
    """Map a quantile onto ``[phi_min, phi_max]``: piecewise linear through
    ``(0, phi_max)``, ``(1/2, 1)`` and ``(1, phi_min)``."""
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"quantile must lie in [0, 1], got {q}")
    # a*(1-w) + b*w hits both anchors exactly at w = 0 and w = 1
    if q <= 0.5:
        w = q / 0.5
        return qmap.phi_max * (1.0 - w) + w
    w = (q - 0.5) / 0.5
    return (1.0 - w) + qmap.phi_min * w
