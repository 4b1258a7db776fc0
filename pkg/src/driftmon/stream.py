"""Synthetic and replayed prediction streams with tracked accuracy drift.

Every generator returns a list of :class:`StreamEvent`.  Synthetic generators
populate ``true_accuracy`` (the model accuracy the outcome was drawn from);
replayed logs leave it as ``None`` and risk is then scored against
:func:`moving_average_truth`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, LipschitzViolationError, ParseError, ValidationError
from .rng import substream

KINDS = ("random_walk", "piecewise_linear", "adversarial_rr", "rotating_clusters", "replay")

# Concentration of the Beta draw used for synthetic confidences.
_CONFIDENCE_CONCENTRATION = 10.0


@dataclass(frozen=True, slots=True)
class StreamEvent:
    t: int
    outcome: int
    confidence: float
    features: tuple[float, ...] | None = None
    true_accuracy: float | None = None

    def __post_init__(self) -> None:
        if self.outcome not in (0, 1):
            raise ValidationError(f"outcome must be 0 or 1, got {self.outcome!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence!r}")
        if self.true_accuracy is not None and not 0.0 <= self.true_accuracy <= 1.0:
            raise ValidationError(f"true_accuracy must lie in [0, 1], got {self.true_accuracy!r}")


@dataclass
class DriftSpec:
    """Parameters of a synthetic (or replayed) stream.

    ``params`` carries the kind-specific knobs:

    * piecewise_linear: ``waypoints`` as ``[(t, mu), ...]``
    * adversarial_rr: ``window`` (detector window m, default 75), ``v``
      (0 drives accuracy to 1/2, 1 keeps it at ``mu0``), ``tail_confidence``
    * rotating_clusters: ``n_clusters``, ``rotation_rate`` (radians per step),
      ``radius``, ``sigma``, ``train_frac``, ``analytic``
    * replay: ``path``
    """

    kind: str
    delta: float = 0.0
    horizon: int = 1000
    mu0: float = 0.9
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown drift kind {self.kind!r}; expected one of {KINDS}")
        if not (0.0 <= self.delta <= 1.0):
            raise ConfigurationError(f"delta must lie in [0, 1], got {self.delta}")
        if not (0.0 <= self.mu0 <= 1.0):
            raise ConfigurationError(f"mu0 must lie in [0, 1], got {self.mu0}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigurationError(f"horizon must be a positive integer, got {self.horizon}")


def generate(spec: DriftSpec) -> list[StreamEvent]:
    """Dispatch on ``spec.kind``."""
    spec.validate()
    if spec.kind == "random_walk":
        return gen_random_walk(spec)
    if spec.kind == "piecewise_linear":
        return gen_piecewise(spec)
    if spec.kind == "adversarial_rr":
        return gen_adversarial_rr(spec)
    if spec.kind == "rotating_clusters":
        return gen_rotating_clusters(spec)
    path = spec.params.get("path")
    if path is None:
        raise ConfigurationError("replay stream needs params['path']")
    return replay_csv(path)


# --------------------------------------------------------------------------
# helpers


def _require_kind(spec: DriftSpec, kind: str) -> None:
    spec.validate()
    if spec.kind != kind:
        raise ConfigurationError(f"expected a {kind} spec, got {spec.kind!r}")


def _enforce_lipschitz(mu: np.ndarray, delta: float) -> np.ndarray:
    """Remove floating-point overshoot so that ``|mu[t] - mu[t-1]| <= delta`` holds exactly.

    Only ulp-level corrections are made; a genuine violation is an error.
    """
    mu = mu.copy()
    # a correction can push the following step over; rescan until clean
    bad = np.flatnonzero(np.abs(np.diff(mu)) > delta) + 1
    while bad.size:
        for t in bad:
            prev = mu[t - 1]
            if abs(mu[t] - prev) <= delta:
                continue
            if abs(mu[t] - prev) > delta + 1e-9:
                raise LipschitzViolationError(
                    f"accuracy step {abs(mu[t] - prev):.3g} at t={t} exceeds delta={delta}"
                )
            target = prev + math.copysign(delta, mu[t] - prev)
            while abs(target - prev) > delta:
                target = np.nextafter(target, prev)
            mu[t] = min(max(target, 0.0), 1.0)
        bad = np.flatnonzero(np.abs(np.diff(mu)) > delta) + 1
    return mu


def _draw_confidence(rng: np.random.Generator, mu: np.ndarray) -> np.ndarray:
    m = np.clip(mu, 1e-3, 1.0 - 1e-3)
    return rng.beta(_CONFIDENCE_CONCENTRATION * m, _CONFIDENCE_CONCENTRATION * (1.0 - m))


def _events_from_arrays(
    outcomes: np.ndarray,
    confidence: np.ndarray,
    mu: np.ndarray | None,
    features: np.ndarray | None = None,
) -> list[StreamEvent]:
    outs = outcomes.astype(int).tolist()
    confs = np.clip(confidence, 0.0, 1.0).astype(float).tolist()
    mus = mu.astype(float).tolist() if mu is not None else [None] * len(outs)
    feats = [tuple(row) for row in features.astype(float).tolist()] if features is not None else [None] * len(outs)
    return [
        StreamEvent(t, o, c, f, m)
        for t, (o, c, f, m) in enumerate(zip(outs, confs, feats, mus))
    ]


# --------------------------------------------------------------------------
# generators


def random_walk_path(mu0: float, increments: Sequence[float]) -> np.ndarray:
    """Clamped walk: ``mu[t] = clamp(mu[t-1] + increments[t-1], 0, 1)`` with ``mu[0] = mu0``."""
    out = np.empty(len(increments) + 1)
    m = float(mu0)
    out[0] = m
    for i, u in enumerate(increments, start=1):
        m += u
        if m > 1.0:
            m = 1.0
        elif m < 0.0:
            m = 0.0
        out[i] = m
    return out


def gen_random_walk(spec: DriftSpec) -> list[StreamEvent]:
    _require_kind(spec, "random_walk")
    rng = substream(spec.seed, "stream")
    T = int(spec.horizon)
    increments = rng.uniform(-spec.delta, spec.delta, size=T - 1) if spec.delta > 0 else np.zeros(T - 1)
    mu = _enforce_lipschitz(random_walk_path(spec.mu0, increments.tolist()), spec.delta)
    outcomes = rng.random(T) < mu
    confidence = _draw_confidence(rng, mu)
    return _events_from_arrays(outcomes, confidence, mu)


def piecewise_path(waypoints: Iterable[tuple[float, float]], horizon: int, delta: float) -> np.ndarray:
    """Linear interpolation between ``(t, mu)`` waypoints, held constant outside them."""
    pts = sorted((float(t), float(m)) for t, m in waypoints)
    if not pts:
        raise ConfigurationError("piecewise stream needs at least one waypoint")
    for (t0, m0), (t1, m1) in zip(pts, pts[1:]):
        if t1 == t0:
            raise ConfigurationError(f"duplicate waypoint time {t0}")
        slope = abs(m1 - m0) / (t1 - t0)
        if slope > delta + 1e-12:
            raise LipschitzViolationError(
                f"waypoint slope {slope:.4g} between t={t0:g} and t={t1:g} exceeds delta={delta}"
            )
    for _, m in pts:
        if not 0.0 <= m <= 1.0:
            raise ConfigurationError(f"waypoint accuracy {m} outside [0, 1]")
    ts, ms = zip(*pts)
    mu = np.interp(np.arange(horizon, dtype=float), ts, ms)
    return _enforce_lipschitz(mu, delta)


def gen_piecewise(spec: DriftSpec) -> list[StreamEvent]:
    _require_kind(spec, "piecewise_linear")
    waypoints = spec.params.get("waypoints") or [(0, spec.mu0)]
    mu = piecewise_path(waypoints, int(spec.horizon), spec.delta)
    rng = substream(spec.seed, "stream")
    outcomes = rng.random(len(mu)) < mu
    confidence = _draw_confidence(rng, mu)
    return _events_from_arrays(outcomes, confidence, mu)


def adversarial_schedule(delta: float, window: int) -> tuple[int, int, int]:
    """Return ``(ramp_len, ramp_start, ramp_end)`` for the constant-tail construction.

    Features become constant at ``ramp_len = ceil(1/delta)``; accuracy moves
    between ``window + ceil(1/delta)`` and ``window + ceil(2/delta)``.
    """
    if delta <= 0:
        raise ConfigurationError("adversarial stream needs delta > 0")
    head = math.ceil(1.0 / delta)
    return head, window + head, window + math.ceil(2.0 / delta)


def gen_adversarial_rr(spec: DriftSpec) -> list[StreamEvent]:
    """Stream on which any fixed-window detector settles to a constant signal.

    During the first ``ceil(1/delta)`` steps the input distribution is a
    mixture that shifts linearly from the training distribution onto a point
    mass ``chi``.  From then on every feature vector equals ``chi`` and the
    confidence is constant, so a window-``m`` detector sees a frozen buffer.
    After a further ``m`` steps the labels at ``chi`` start flipping, driving
    accuracy linearly from ``mu0`` to 1/2 (``v = 0``) or leaving it at
    ``mu0`` (``v = 1``).
    """
    _require_kind(spec, "adversarial_rr")
    window = int(spec.params.get("window", 75))
    v = int(spec.params.get("v", 0))
    if v not in (0, 1):
        raise ConfigurationError(f"v must be 0 or 1, got {v}")
    tail_conf = float(spec.params.get("tail_confidence", 0.8))
    head, ramp_start, ramp_end = adversarial_schedule(spec.delta, window)
    T = int(spec.horizon)
    target = 0.5 if v == 0 else spec.mu0

    waypoints = [(0, spec.mu0), (ramp_start, spec.mu0), (ramp_end, target)]
    mu = piecewise_path(waypoints, T, spec.delta)

    rng = substream(spec.seed, "stream")
    t = np.arange(T)
    chi = np.array([1.5, -1.5])
    from_origin = rng.random(T) >= np.minimum(t / head, 1.0)
    feats = np.where(from_origin[:, None], rng.standard_normal((T, 2)), chi[None, :])
    conf = np.where(from_origin, rng.uniform(0.5, 1.0, size=T), tail_conf)
    outcomes = rng.random(T) < mu
    return _events_from_arrays(outcomes, conf, mu, feats)


# -- rotating clusters -----------------------------------------------------

_ANGLES = 720


def _cluster_centers(n_clusters: int, radius: float, angle: np.ndarray) -> np.ndarray:
    """Centers at each step, shape ``(len(angle), n_clusters, 2)``."""
    base = 2.0 * np.pi * np.arange(n_clusters) / n_clusters
    theta = base[None, :] + angle[:, None]
    return radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _cell_mass(points: np.ndarray, A: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Probability that ``N(p, sigma^2 I)`` lands in the polygon ``{x : A x <= b}`` for each p.

    Integrates the radial Gaussian tail along rays from ``p``; along each ray
    the convex cell is an interval ``[r_lo, r_hi]``.
    """
    phi = (np.arange(_ANGLES) + 0.5) * (2.0 * np.pi / _ANGLES)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)  # (A, 2)
    s = A @ u.T  # (H, A)
    g = b[None, :] - points @ A.T  # (S, H)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = g[:, :, None] / s[None, :, :]  # (S, H, A)
    pos = s[None, :, :] > 0
    neg = s[None, :, :] < 0
    r_hi = np.where(pos, ratio, np.inf).min(axis=1)
    r_lo = np.maximum(np.where(neg, ratio, -np.inf).max(axis=1), 0.0)
    # rays parallel to a face: inside iff g >= 0
    blocked = ((s[None, :, :] == 0) & (g[:, :, None] < 0)).any(axis=1)
    two_var = 2.0 * sigma * sigma
    mass = np.exp(-(r_lo**2) / two_var) - np.exp(-np.where(np.isinf(r_hi), np.inf, r_hi**2) / two_var)
    mass = np.where((r_hi > r_lo) & ~blocked, mass, 0.0)
    return mass.mean(axis=1)


def nearest_centroid_accuracy(
    centroids: np.ndarray, true_centers: np.ndarray, sigma: float, chunk: int = 512
) -> np.ndarray:
    """Accuracy of a fixed nearest-centroid classifier on equal-weight Gaussian classes.

    ``centroids`` is ``(K, 2)``; ``true_centers`` is ``(S, K, 2)``.
    """
    K = len(centroids)
    S = true_centers.shape[0]
    acc = np.zeros(S)
    sq = (centroids**2).sum(axis=1)
    for k in range(K):
        others = [j for j in range(K) if j != k]
        A = 2.0 * (centroids[others] - centroids[k])
        b = sq[others] - sq[k]
        for lo in range(0, S, chunk):
            acc[lo : lo + chunk] += _cell_mass(true_centers[lo : lo + chunk, k], A, b, sigma)
    return np.clip(acc / K, 0.0, 1.0)


def _margin_confidence(dist: np.ndarray) -> np.ndarray:
    two = np.sort(dist, axis=1)[:, :2]
    return 1.0 / (1.0 + np.exp(-(two[:, 1] - two[:, 0])))


def gen_rotating_clusters(spec: DriftSpec) -> list[StreamEvent]:
    """Gaussian class clusters whose centers rotate about the origin.

    A nearest-centroid classifier is fit on an initial training segment of
    ``train_frac * horizon`` points (not emitted); the ``horizon`` emitted
    events record its correctness and a logistic squashing of the margin
    between the two closest centroid distances.  ``true_accuracy`` is the
    exact per-step accuracy of the frozen classifier (angular quadrature over
    its Voronoi cells) unless ``analytic`` is false.
    """
    _require_kind(spec, "rotating_clusters")
    p = spec.params
    K = int(p.get("n_clusters", 4))
    rate = float(p.get("rotation_rate", 1e-4))
    radius = float(p.get("radius", 2.5))
    sigma = float(p.get("sigma", 1.0))
    train_frac = float(p.get("train_frac", 0.05))
    analytic = bool(p.get("analytic", True))
    if K < 2:
        raise ConfigurationError("rotating clusters need at least 2 clusters")
    if rate < 0:
        raise ConfigurationError("rotation rate must be non-negative")
    if radius <= 0:
        raise ConfigurationError("cluster centers coincide (radius must be positive)")
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")

    T = int(spec.horizon)
    n_train = max(K, int(round(train_frac * T)))
    total = n_train + T
    rng = substream(spec.seed, "stream")
    centers = _cluster_centers(K, radius, rate * np.arange(total))
    y = rng.integers(0, K, size=total)
    x = centers[np.arange(total), y] + sigma * rng.standard_normal((total, 2))

    centroids = np.empty((K, 2))
    for k in range(K):
        pts = x[:n_train][y[:n_train] == k]
        centroids[k] = pts.mean(axis=0) if len(pts) else centers[0, k]
    if len(np.unique(np.round(centroids, 12), axis=0)) < K:
        raise ConfigurationError("fitted centroids are degenerate")

    xd, yd = x[n_train:], y[n_train:]
    dist = np.linalg.norm(xd[:, None, :] - centroids[None, :, :], axis=-1)
    outcomes = dist.argmin(axis=1) == yd
    conf = _margin_confidence(dist)
    mu = nearest_centroid_accuracy(centroids, centers[n_train:], sigma) if analytic else None
    return _events_from_arrays(outcomes, conf, mu, xd)


# --------------------------------------------------------------------------
# replay and transforms


def replay_csv(path: str | Path) -> list[StreamEvent]:
    """Read a prediction log with header ``t,outcome,confidence[,f0,f1,...]``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("missing header", line=1) from None
        if header[:3] != ["t", "outcome", "confidence"]:
            raise ParseError(f"header must start with t,outcome,confidence; got {','.join(header)}", line=1)
        extra = header[3:]
        for i, name in enumerate(extra):
            if name != f"f{i}":
                raise ParseError(f"feature column {i} must be named f{i}, got {name!r}", line=1)
        events = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            try:
                t = int(row[0])
                outcome_f = float(row[1])
                conf = float(row[2])
                feats = tuple(float(c) for c in row[3:]) or None
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if outcome_f not in (0.0, 1.0):
                raise ParseError(f"outcome must be 0 or 1, got {row[1]!r}", line=line)
            if not 0.0 <= conf <= 1.0:
                raise ParseError(f"confidence must lie in [0, 1], got {row[2]!r}", line=line)
            if t < 0:
                raise ParseError(f"negative step index {t}", line=line)
            events.append(StreamEvent(t, int(outcome_f), conf, feats, None))
    return events


def write_csv(events: Sequence[StreamEvent], path: str | Path) -> None:
    """Write events in the replay schema (``true_accuracy`` is not part of it)."""
    dim = len(events[0].features) if events and events[0].features is not None else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "outcome", "confidence"] + [f"f{i}" for i in range(dim)])
        for ev in events:
            feats = list(ev.features) if ev.features is not None else []
            if len(feats) != dim:
                raise ValidationError(f"event {ev.t} has {len(feats)} features, expected {dim}")
            w.writerow([ev.t, ev.outcome, repr(ev.confidence)] + [repr(f) for f in feats])


def block_bootstrap(events: Sequence[StreamEvent], block_len: int, seed: int) -> list[StreamEvent]:
    """Shuffle events within consecutive blocks of ``block_len``.

    Events keep their original ``t`` field, so the output is a permutation of
    the input; consumers index steps by position.
    """
    if block_len < 1:
        raise ConfigurationError("block_len must be >= 1")
    out = list(events)
    if block_len == 1:
        return out
    rng = substream(seed, "bootstrap")
    for lo in range(0, len(out), block_len):
        block = out[lo : lo + block_len]
        perm = rng.permutation(len(block))
        out[lo : lo + block_len] = [block[i] for i in perm]
    return out


def moving_average_truth(outcomes: Sequence[int], w: int = 100) -> np.ndarray:
    """Trailing mean of the last ``min(w, t+1)`` outcomes at every index."""
    if w < 1:
        raise ConfigurationError("window must be >= 1")
    x = np.asarray(outcomes, dtype=float)
    if x.size == 0:
        return x
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - w, 0)
    return np.clip((csum[idx] - csum[lo]) / (idx - lo), 0.0, 1.0)
