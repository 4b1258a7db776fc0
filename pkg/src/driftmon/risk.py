"""Monitoring risk, amortized metrics and trade-off frontiers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

RISK_KINDS = ("mae", "hinge", "bin")

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _check_unit(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {x}")


def r_mae(mu: float, mu_hat: float) -> float:
    _check_unit("mu", mu)
    _check_unit("mu_hat", mu_hat)
    return abs(mu - mu_hat)


def r_bin(mu: float, mu_hat: float, rho: float) -> int:
    """1 when truth and estimate fall strictly on opposite sides of ``rho``."""
    return int((mu > rho and mu_hat < rho) or (mu < rho and mu_hat > rho))


def r_hinge(mu: float, mu_hat: float, rho: float) -> float:
    return abs(rho - mu) * r_bin(mu, mu_hat, rho)


@dataclass(frozen=True)
class RiskReport:
    Q: float
    R_mae: float
    R_hinge: float
    R_bin: float
    c: float
    rho: float
    T: int
    truth_source: str = "true_accuracy"

    @property
    def L_mae(self) -> float:
        return self.c * self.Q + self.R_mae

    @property
    def L_hinge(self) -> float:
        return self.c * self.Q + self.R_hinge

    @property
    def L_bin(self) -> float:
        return self.c * self.Q + self.R_bin

    def risk(self, kind: str) -> float:
        return {"mae": self.R_mae, "hinge": self.R_hinge, "bin": self.R_bin}[kind]


def instantaneous_risks(mu: np.ndarray, mu_hat: np.ndarray, rho: float) -> dict[str, np.ndarray]:
    """Vectorized ``r_mae``, ``r_hinge`` and ``r_bin`` per step."""
    wrong = ((mu > rho) & (mu_hat < rho)) | ((mu < rho) & (mu_hat > rho))
    return {
        "mae": np.abs(mu - mu_hat),
        "hinge": np.abs(rho - mu) * wrong,
        "bin": wrong.astype(float),
    }


def amortize(
    queries: Sequence[int],
    estimates: Sequence[float],
    truth: Sequence[float],
    rho: float,
    c: float = 0.0,
    truth_source: str = "true_accuracy",
) -> RiskReport:
    """Average query rate and risks over a run."""
    a = np.asarray(queries, dtype=float)
    est = np.asarray(estimates, dtype=float)
    mu = np.asarray(truth, dtype=float)
    if not (a.shape == est.shape == mu.shape):
        raise ValidationError(f"length mismatch: {a.shape}, {est.shape}, {mu.shape}")
    if a.size == 0:
        raise ValidationError("empty trajectory")
    if ((mu < 0) | (mu > 1)).any() or ((est < 0) | (est > 1)).any():
        raise ValidationError("accuracies must lie in [0, 1]")
    r = instantaneous_risks(mu, est, rho)
    # math.fsum keeps the result independent of element order
    T = a.size
    return RiskReport(
        Q=math.fsum(a) / T,
        R_mae=math.fsum(r["mae"]) / T,
        R_hinge=math.fsum(r["hinge"]) / T,
        R_bin=math.fsum(r["bin"]) / T,
        c=c,
        rho=rho,
        T=T,
        truth_source=truth_source,
    )


# --------------------------------------------------------------------------
# frontiers


@dataclass(frozen=True)
class FrontierPoint:
    hyperparam: float
    Q: float
    R: Mapping[str, float]
    stderr_Q: float
    stderr_R: Mapping[str, float]
    n_runs: int
    low_confidence: bool = field(default=False)

    def curve_point(self, kind: str) -> tuple[float, float]:
        return self.Q, self.R[kind]


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    mean = math.fsum(x) / x.size
    if x.size < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    return mean, math.sqrt(var / x.size)


def build_frontier(runs: Mapping[float, Sequence[RiskReport]]) -> list[FrontierPoint]:
    """Aggregate runs per hyperparameter value into points sorted by ``Q``.

    Standard errors are across runs (seeds); a single run yields 0 and is
    flagged ``low_confidence``.
    """
    points = []
    for hp, reports in runs.items():
        if not reports:
            raise ValidationError(f"no runs for hyperparameter {hp}")
        q, sq = _mean_stderr([r.Q for r in reports])
        R, sR = {}, {}
        for kind in RISK_KINDS:
            R[kind], sR[kind] = _mean_stderr([r.risk(kind) for r in reports])
        points.append(FrontierPoint(hp, q, R, sq, sR, len(reports), low_confidence=len(reports) < 2))
    return sorted(points, key=lambda p: (p.Q, p.R["mae"], p.hyperparam))


def normalized_auc(frontier: Sequence[tuple[float, float]], q_max_norm: float, r_max_norm: float) -> float:
    """Area under the ``(Q, R)`` curve on axes scaled by the given constants.

    The curve is extended flat from its lowest-``Q`` point to ``Q = 0`` and
    from its highest-``Q`` point to the right edge; the integral runs over the
    normalized ``Q`` range ``[0, 1]`` with the trapezoid rule.
    """
    if not frontier:
        raise ValidationError("empty frontier")
    if q_max_norm <= 0 or r_max_norm <= 0:
        raise ValidationError("normalization constants must be positive")
    pts = sorted((q / q_max_norm, r / r_max_norm) for q, r in frontier)
    qs = [0.0] + [q for q, _ in pts] + [max(1.0, pts[-1][0])]
    rs = [pts[0][1]] + [r for _, r in pts] + [pts[-1][1]]
    q = np.asarray(qs)
    r = np.asarray(rs)
    if q[-1] > 1.0:
        keep = q < 1.0
        r_end = float(np.interp(1.0, q, r))
        q = np.append(q[keep], 1.0)
        r = np.append(r[keep], r_end)
    return float(_trapezoid(r, q))


def min_loss_over_frontier(frontier: Sequence[tuple[float, float]], c: float) -> float:
    if not frontier:
        raise ValidationError("empty frontier")
    return min(c * q + r for q, r in frontier)
