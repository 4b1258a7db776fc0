"""Monitoring policies as step-wise state machines.

Each ``*_step`` function consumes one stream position and returns a
:class:`PolicyAction`.  Outcomes are never handed to a policy directly: it
calls ``labels.request()`` on the steps where it decides to query, and only
then learns whether the model was right.  Policy states are plain mutable
dataclasses owned by a single run.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from .bounds import tolerance_constants
from .detector import QuantileMap, SignalHistory, modulation_factor
from .errors import ConfigurationError

MODES = ("estimation", "decision")


class LabelSource(Protocol):
    def request(self) -> int:
        """Reveal the current step's outcome (counts as a label query)."""


@dataclass(frozen=True, slots=True)
class PolicyAction:
    query: bool
    estimate: float
    organic: bool = False
    safety: bool = False


class LabelWindow:
    """The ``n`` most recent labels with an exact running sum."""

    __slots__ = ("_buf", "_sum")

    def __init__(self, n: int):
        self._buf: deque[int] = deque(maxlen=n)
        self._sum = 0

    def push(self, outcome: int) -> None:
        if len(self._buf) == self._buf.maxlen:
            self._sum -= self._buf[0]
        self._buf.append(outcome)
        self._sum += outcome

    def __len__(self) -> int:
        return len(self._buf)

    def mean(self) -> float:
        return self._sum / len(self._buf)

    def values(self) -> list[int]:
        return list(self._buf)


def _round_steps(x: float) -> float:
    """Round a real-valued wait to whole steps; infinity passes through."""
    return x if math.isinf(x) else float(math.floor(x + 0.5))


# --------------------------------------------------------------------------
# Periodic Querying


@dataclass
class PqState:
    """Open-loop cycle: wait ``round(n * alpha)`` steps, then query ``n`` in a row.

    ``buffer_counter`` counts remaining idle steps, ``query_counter`` the
    remaining queries of the running batch.  The long-run query rate is
    ``1 / (1 + alpha)``.
    """

    n: int
    alpha: float
    estimate: float = 1.0
    query_counter: int = 0
    buffer_counter: float = field(default=-1.0)
    label_buffer: LabelWindow = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError("batch size n must be >= 1")
        if not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.estimate <= 1.0:
            raise ConfigurationError("initial estimate must lie in [0, 1]")
        self.label_buffer = LabelWindow(self.n)
        if self.buffer_counter < 0:
            self.buffer_counter = self.wait_len

    @property
    def wait_len(self) -> float:
        return _round_steps(self.n * self.alpha)

    @property
    def budget(self) -> float:
        return 1.0 / (1.0 + self.alpha)


def pq_from_budget(budget: float, n: int = 15, mu0: float = 1.0) -> PqState:
    """PQ spending a long-run fraction ``budget`` of steps on labels."""
    if not 0.0 <= budget <= 1.0:
        raise ConfigurationError(f"budget must lie in [0, 1], got {budget}")
    alpha = math.inf if budget == 0 else 1.0 / budget - 1.0
    return PqState(n=n, alpha=alpha, estimate=mu0)


def pq_from_tolerance(epsilon: float, delta: float, rho: float | None = None, mu0: float = 1.0) -> PqState:
    """PQ whose worst-case expected risk is ``epsilon`` under ``delta``-Lipschitz drift.

    ``rho`` is accepted for symmetry with the decision-mode constructor; the
    constants do not depend on it.
    """
    n, alpha = tolerance_constants(epsilon, delta)
    return PqState(n=n, alpha=alpha, estimate=mu0)


def pq_step(state: PqState, labels: LabelSource) -> PolicyAction:
    if state.buffer_counter > 0:
        state.buffer_counter -= 1
        return PolicyAction(False, state.estimate)
    if state.query_counter == 0:
        state.query_counter = state.n
    state.label_buffer.push(labels.request())
    state.query_counter -= 1
    if state.query_counter == 0:
        state.estimate = state.label_buffer.mean()
        state.buffer_counter = state.wait_len
    return PolicyAction(True, state.estimate)


# --------------------------------------------------------------------------
# Request-and-Reverify


@dataclass
class RrState:
    n: int
    phi: float
    estimate: float = 1.0
    remaining_batch: int = 0
    label_buffer: LabelWindow = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError("batch size n must be >= 1")
        if self.phi < 0:
            raise ConfigurationError("threshold phi must be >= 0")
        self.label_buffer = LabelWindow(self.n)


def rr_step(state: RrState, labels: LabelSource, signal: float) -> PolicyAction:
    """Start a batch of ``n`` queries when ``signal >= phi``.

    Triggers arriving while a batch is running do not extend it.
    """
    if state.remaining_batch == 0 and signal >= state.phi:
        state.remaining_batch = state.n
    if state.remaining_batch == 0:
        return PolicyAction(False, state.estimate)
    state.label_buffer.push(labels.request())
    state.remaining_batch -= 1
    if state.remaining_batch == 0:
        state.estimate = state.label_buffer.mean()
    return PolicyAction(True, state.estimate)


# --------------------------------------------------------------------------
# MLDemon


@dataclass
class MldemonState:
    """State of the adaptive policy.

    Organic queries fire once ``steps_since_query`` (consecutive unqueried
    steps) reaches ``floor(k)``.  ``k`` is the anomaly-modulated point in
    ``[nu * k_max, k_max]`` with ``k_max = alpha + beta``.  In decision mode a
    safety automaton additionally forces a batch of ``n`` queries every
    ``round(n * (alpha + beta))`` steps and refreshes the margin surplus
    ``beta`` from the batch estimate.
    """

    n: int
    epsilon: float
    delta: float
    alpha: float
    nu: float = 0.15
    rho: float | None = None
    b: float = 1.0
    unbiased: bool = True
    mode: str = "estimation"
    quantile_map: QuantileMap = field(default_factory=QuantileMap)
    estimate: float = 1.0
    beta: float = 0.0
    query_counter: int = -1
    buffer_counter: float = field(default=-1.0)
    steps_since_query: int = 0
    history: SignalHistory = field(default_factory=SignalHistory)
    label_buffer: LabelWindow = field(init=False)
    tolerance: float = field(init=False)
    k: float = field(init=False, default=0.0)
    k_min: float = field(init=False, default=0.0)
    k_max: float = field(init=False, default=0.0)
    organic_queries: int = field(init=False, default=0)
    safety_queries: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.nu <= 1:
            raise ConfigurationError(f"nu must lie in (0, 1], got {self.nu}")
        if self.b < 1:
            raise ConfigurationError(f"margin surplus factor b must be >= 1, got {self.b}")
        if self.n < 1:
            raise ConfigurationError("window n must be >= 1")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.mode == "decision":
            if self.rho is None:
                raise ConfigurationError("decision mode needs a threshold rho")
            if self.delta <= 0:
                raise ConfigurationError("decision mode needs delta > 0 for the margin surplus")
        self.label_buffer = LabelWindow(self.n)
        self.tolerance = self.epsilon
        if self.buffer_counter < 0:
            self.buffer_counter = _round_steps(self.alpha)


def mldemon_from_tolerance(
    epsilon: float,
    delta: float,
    nu: float = 0.15,
    rho: float | None = None,
    mode: str = "estimation",
    b: float = 1.0,
    unbiased: bool = True,
    mu0: float = 1.0,
    n: int | None = None,
    quantile_map: QuantileMap | None = None,
) -> MldemonState:
    """Build MLDemon with the same ``(n, alpha)`` as PQ at this tolerance.

    Passing ``n`` overrides the window while keeping ``alpha``; this is the
    fixed-window variant used in frontier sweeps.
    """
    if not 0 < nu <= 1:
        raise ConfigurationError(f"nu must lie in (0, 1], got {nu}")
    n_tol, alpha = tolerance_constants(epsilon, delta)
    return MldemonState(
        n=n_tol if n is None else int(n),
        epsilon=epsilon,
        delta=delta,
        alpha=alpha,
        nu=nu,
        rho=rho,
        b=b,
        unbiased=unbiased,
        mode=mode,
        quantile_map=quantile_map or QuantileMap(),
        estimate=mu0,
    )


def mldemon_step(state: MldemonState, labels: LabelSource, signal: float) -> PolicyAction:
    decision = state.mode == "decision"
    state.tolerance = max(abs(state.rho - state.estimate), state.epsilon) if decision else state.epsilon

    k_max = state.alpha + state.beta
    k_min = state.nu * k_max
    q = state.history.quantile(signal)
    state.history.add(signal)
    factor = modulation_factor(state.quantile_map, q)
    k = min(max(factor * (k_max - k_min) / 2.0, k_min), k_max)
    state.k, state.k_min, state.k_max = k, k_min, k_max

    # no query during the last k whole steps, i.e. idle >= floor(k); written
    # without floor so that an infinite k never fires
    organic = state.steps_since_query > k - 1.0
    safety = False
    batch_done = False
    if decision:
        # mutually exclusive, evaluated in this order
        if state.buffer_counter > 0:
            state.buffer_counter -= 1
        elif state.query_counter > 0:
            safety = True
            state.query_counter -= 1
        elif state.query_counter == 0:
            batch_done = True
            state.query_counter = -1
        elif state.buffer_counter == 0:
            safety = True
            state.query_counter = state.n - 1
            state.buffer_counter = -1

    query = organic or safety
    if query:
        state.label_buffer.push(labels.request())
        state.steps_since_query = 0
        state.organic_queries += organic
        state.safety_queries += safety
        if not decision or state.unbiased:
            state.estimate = state.label_buffer.mean()
    else:
        state.steps_since_query += 1

    if batch_done:
        if len(state.label_buffer):
            state.estimate = state.label_buffer.mean()
        margin = abs(state.estimate - state.rho) - state.epsilon
        state.beta = state.b * max(margin, 0.0) / state.delta
        state.buffer_counter = max(_round_steps(state.n * (state.alpha + state.beta)) - 1, 0.0)

    return PolicyAction(query, state.estimate, organic, safety)

