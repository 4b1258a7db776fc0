"""Experiment orchestration: configs, the deployment loop, sweeps and output files.

A run replays one stream through one policy.  At every step the detector
sees the event's confidence/features, the policy decides whether to query,
and the outcome is revealed only through the label source on query steps.
A sweep runs every (policy, hyperparameter, seed) combination, aggregates
per-policy frontiers and writes:

* ``trajectories/<policy>_<hyperparam>_<seed>.csv``
* ``frontier_<policy>.csv``
* ``summary.json`` with normalized AUCs, minimum combined losses and the
  config echo.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .detector import DETECTOR_KINDS, Detector, QuantileMap
from .errors import ConfigurationError
from .policy import (
    MldemonState,
    PolicyAction,
    PqState,
    RrState,
    mldemon_from_tolerance,
    mldemon_step,
    pq_from_budget,
    pq_from_tolerance,
    pq_step,
    rr_step,
)
from .risk import RISK_KINDS, FrontierPoint, RiskReport, amortize, build_frontier, min_loss_over_frontier, normalized_auc
from .stream import DriftSpec, StreamEvent, block_bootstrap, generate, moving_average_truth

log = logging.getLogger(__name__)

POLICY_KINDS = ("pq", "rr", "mldemon-est", "mldemon-dec")

TRAJECTORY_HEADER = ["t", "a", "mu_hat", "mu", "signal", "organic", "safety"]
FRONTIER_HEADER = [
    "hyperparam", "Q", "Q_stderr", "R_mae", "R_hinge", "R_bin",
    "stderr_mae", "stderr_hinge", "stderr_bin",
]


# --------------------------------------------------------------------------
# configuration


@dataclass
class PolicyConfig:
    kind: str
    sweep: list[float]
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if not self.sweep:
            raise ConfigurationError(f"policy {self.kind} has an empty sweep")


@dataclass
class DetectorConfig:
    kind: str = "ks"
    window: int = 75
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in DETECTOR_KINDS:
            raise ConfigurationError(f"unknown detector {self.kind!r}")

    def build(self) -> Detector:
        return Detector(self.kind, self.window, self.value)


@dataclass
class ExperimentConfig:
    drift: DriftSpec
    policies: list[PolicyConfig]
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    c: float = 0.1
    rho_offset: float = 0.1
    rho: float | None = None
    hinge_offsets: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2])
    costs: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0])
    truth_window: int = 100
    bootstrap_block: int = 0
    write_trajectories: bool = True

    def __post_init__(self) -> None:
        if not self.policies:
            raise ConfigurationError("config defines no policies")
        if not self.seeds:
            raise ConfigurationError("config needs at least one seed")
        if self.c < 0:
            raise ConfigurationError("label cost c must be >= 0")
        self.drift.validate()

    def policy(self, kind: str) -> PolicyConfig:
        for p in self.policies:
            if p.kind == kind:
                return p
        raise ConfigurationError(f"policy {kind!r} not in config")

    def echo(self) -> dict[str, Any]:
        return json.loads(json.dumps(asdict(self), default=str))


def _parse_scalar(text: str) -> Any:
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _parse_list(text: str) -> list[Any]:
    return [_parse_scalar(x) for x in text.split(",") if x.strip()]


def _parse_waypoints(text: str) -> list[tuple[float, float]]:
    pts = []
    for item in text.split(","):
        if not item.strip():
            continue
        t, _, m = item.partition(":")
        pts.append((float(t), float(m)))
    return pts


_DRIFT_CORE = {"kind", "delta", "horizon", "mu0", "seed"}


def config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    if not cp.has_section("drift"):
        raise ConfigurationError("config needs a [drift] section")
    d = cp["drift"]
    params: dict[str, Any] = {}
    for key, raw in d.items():
        if key in _DRIFT_CORE:
            continue
        params[key] = _parse_waypoints(raw) if key == "waypoints" else _parse_scalar(raw)
    drift = DriftSpec(
        kind=d.get("kind", "random_walk"),
        delta=d.getfloat("delta", 0.0),
        horizon=d.getint("horizon", 1000),
        mu0=d.getfloat("mu0", 0.9),
        seed=d.getint("seed", 0),
        params=params,
    )

    detector = DetectorConfig()
    if cp.has_section("detector"):
        s = cp["detector"]
        detector = DetectorConfig(s.get("kind", "ks"), s.getint("window", 75), s.getfloat("value", 0.0))

    policies = []
    for name in cp.sections():
        if not name.startswith("policy:"):
            continue
        s = cp[name]
        sweep = [float(x) for x in _parse_list(s.get("sweep", ""))]
        params = {k: _parse_scalar(v) for k, v in s.items() if k != "sweep"}
        policies.append(PolicyConfig(name.split(":", 1)[1].strip(), sweep, params))

    kw: dict[str, Any] = {}
    if cp.has_section("experiment"):
        s = cp["experiment"]
        if "seeds" in s:
            kw["seeds"] = [int(x) for x in _parse_list(s["seeds"])]
        for key in ("c", "rho_offset"):
            if key in s:
                kw[key] = s.getfloat(key)
        if "rho" in s:
            kw["rho"] = _parse_scalar(s["rho"])
        for key in ("hinge_offsets", "costs"):
            if key in s:
                kw[key] = [float(x) for x in _parse_list(s[key])]
        for key in ("truth_window", "bootstrap_block"):
            if key in s:
                kw[key] = s.getint(key)
        if "write_trajectories" in s:
            kw["write_trajectories"] = s.getboolean("write_trajectories")
    return ExperimentConfig(drift=drift, policies=policies, detector=detector, **kw)


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read an INI-style config; ``overrides`` are ``section.key=value`` strings."""
    cp = configparser.ConfigParser(interpolation=None)
    with Path(path).open(encoding="utf-8") as fh:
        cp.read_file(fh)
    apply_overrides(cp, overrides)
    return config_from_parser(cp)


def apply_overrides(cp: configparser.ConfigParser, overrides: Iterable[str]) -> None:
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().rpartition(".")
        if not sep or not dot:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][option] = value.strip()


# --------------------------------------------------------------------------
# deployment loop


class _StreamLabels:
    """Label source over a fixed outcome list; records whether it was asked."""

    __slots__ = ("outcomes", "t", "requested")

    def __init__(self, outcomes: Sequence[int]):
        self.outcomes = outcomes
        self.t = 0
        self.requested = False

    def request(self) -> int:
        self.requested = True
        return self.outcomes[self.t]


@dataclass
class Trajectory:
    queries: np.ndarray
    estimates: np.ndarray
    truth: np.ndarray
    signals: np.ndarray
    organic: np.ndarray
    safety: np.ndarray
    report: RiskReport
    truth_source: str

    def __len__(self) -> int:
        return len(self.queries)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for t in range(len(self)):
                w.writerow([
                    t,
                    int(self.queries[t]),
                    repr(float(self.estimates[t])),
                    repr(float(self.truth[t])),
                    repr(float(self.signals[t])),
                    int(self.organic[t]),
                    int(self.safety[t]),
                ])


def compute_signals(events: Sequence[StreamEvent], detector: Detector) -> np.ndarray:
    """Detector output for every step; depends only on the stream."""
    return np.fromiter(
        (detector.update(ev.confidence, ev.features) for ev in events), dtype=float, count=len(events)
    )


def stream_truth(events: Sequence[StreamEvent], window: int = 100) -> tuple[np.ndarray, str]:
    """Ground truth for scoring: generator accuracy if present, else a trailing mean."""
    if events and all(ev.true_accuracy is not None for ev in events):
        return np.array([ev.true_accuracy for ev in events], dtype=float), "true_accuracy"
    return moving_average_truth([ev.outcome for ev in events], window), f"moving_average(w={window})"


def reference_accuracy(events: Sequence[StreamEvent], window: int = 100) -> float:
    """Accuracy known at deployment time: the stream's initial accuracy."""
    if not events:
        raise ConfigurationError("empty stream")
    if events[0].true_accuracy is not None:
        return float(events[0].true_accuracy)
    head = [ev.outcome for ev in events[:window]]
    return sum(head) / len(head)


PolicyState = PqState | RrState | MldemonState


def _stepper(state: PolicyState) -> Callable[[Any, Any, float], PolicyAction]:
    if isinstance(state, PqState):
        return lambda s, labels, g: pq_step(s, labels)
    if isinstance(state, RrState):
        return rr_step
    if isinstance(state, MldemonState):
        return mldemon_step
    raise TypeError(f"unsupported policy state {type(state).__name__}")


def run_deployment(
    events: Sequence[StreamEvent],
    state: PolicyState,
    signals: Sequence[float],
    rho: float,
    c: float = 0.0,
    truth: tuple[np.ndarray, str] | None = None,
    truth_window: int = 100,
) -> Trajectory:
    """Step ``state`` through ``events`` and score it."""
    T = len(events)
    if len(signals) != T:
        raise ConfigurationError(f"{len(signals)} signals for {T} events")
    mu, source = truth if truth is not None else stream_truth(events, truth_window)
    labels = _StreamLabels([ev.outcome for ev in events])
    step = _stepper(state)
    a = np.zeros(T, dtype=np.int8)
    est = np.empty(T)
    org = np.zeros(T, dtype=np.int8)
    saf = np.zeros(T, dtype=np.int8)
    sig = [float(g) for g in signals]
    for t in range(T):
        labels.t = t
        labels.requested = False
        act = step(state, labels, sig[t])
        if act.query != labels.requested:
            raise RuntimeError(f"policy query flag and label requests disagree at t={t}")
        a[t] = act.query
        est[t] = act.estimate
        org[t] = act.organic
        saf[t] = act.safety
    report = amortize(a, est, mu, rho, c, truth_source=source)
    return Trajectory(a, est, mu, np.asarray(sig), org, saf, report, source)


# --------------------------------------------------------------------------
# building policies from configs


@dataclass(frozen=True)
class RunContext:
    mu0: float
    rho: float
    horizon: int


def build_policy(pcfg: PolicyConfig, hyperparam: float, ctx: RunContext) -> PolicyState:
    p = pcfg.params
    mu0 = min(max(ctx.mu0, 0.0), 1.0)
    if pcfg.kind == "pq":
        if p.get("param", "budget") == "epsilon":
            delta = float(p.get("delta") or 3.0 / ctx.horizon)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return pq_from_tolerance(hyperparam, delta, mu0=mu0)
        return pq_from_budget(hyperparam, n=int(p.get("n", 15)), mu0=mu0)
    if pcfg.kind == "rr":
        return RrState(n=int(p.get("n", 15)), phi=hyperparam, estimate=mu0)
    mode = "estimation" if pcfg.kind == "mldemon-est" else "decision"
    delta = float(p.get("delta") or 3.0 / ctx.horizon)
    n = p.get("n", 15)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return mldemon_from_tolerance(
            epsilon=hyperparam,
            delta=delta,
            nu=float(p.get("nu", 0.15)),
            rho=ctx.rho,
            mode=mode,
            b=float(p.get("b", 1.0)),
            unbiased=bool(p.get("unbiased", True)),
            mu0=mu0,
            n=None if n == "tolerance" else int(n),
            quantile_map=QuantileMap(float(p.get("phi_min", 1 / 8)), float(p.get("phi_max", 4.0))),
        )


def prepare_stream(config: ExperimentConfig, seed: int) -> list[StreamEvent]:
    spec = DriftSpec(
        kind=config.drift.kind,
        delta=config.drift.delta,
        horizon=config.drift.horizon,
        mu0=config.drift.mu0,
        seed=seed,
        params=dict(config.drift.params),
    )
    events = generate(spec)
    if config.bootstrap_block > 1:
        events = block_bootstrap(events, config.bootstrap_block, seed)
    return events


@dataclass
class SeedResult:
    seed: int
    reports: dict[tuple[str, float], RiskReport]
    extra_hinge: dict[tuple[str, float], dict[float, float]]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def run_seed(config: ExperimentConfig, seed: int, out_dir: Path | None = None,
             only: Sequence[str] | None = None) -> SeedResult:
    """Run every configured (policy, hyperparameter) on one seed's stream."""
    events = prepare_stream(config, seed)
    truth = stream_truth(events, config.truth_window)
    mu0 = reference_accuracy(events, config.truth_window)
    rho = config.rho if config.rho is not None else mu0 - config.rho_offset
    ctx = RunContext(mu0=mu0, rho=rho, horizon=len(events))
    signals = compute_signals(events, config.detector.build())
    reports: dict[tuple[str, float], RiskReport] = {}
    extra: dict[tuple[str, float], dict[float, float]] = {}
    for pcfg in config.policies:
        if only and pcfg.kind not in only:
            continue
        for hp in pcfg.sweep:
            state = build_policy(pcfg, hp, ctx)
            traj = run_deployment(events, state, signals, rho, config.c, truth=truth)
            reports[(pcfg.kind, hp)] = traj.report
            extra[(pcfg.kind, hp)] = {
                off: amortize(traj.queries, traj.estimates, traj.truth, mu0 - off, config.c).R_hinge
                for off in config.hinge_offsets
            }
            if out_dir is not None and config.write_trajectories:
                tdir = out_dir / "trajectories"
                tdir.mkdir(parents=True, exist_ok=True)
                traj.to_csv(tdir / f"{pcfg.kind}_{_fmt(hp)}_{seed}.csv")
    log.info("seed %d done (%d runs)", seed, len(reports))
    return SeedResult(seed, reports, extra)


@dataclass
class SweepResult:
    frontiers: dict[str, list[FrontierPoint]]
    auc: dict[str, dict[str, float]]
    min_loss: dict[str, dict[str, dict[str, float]]]
    normalization: dict[str, Any]


def _risk_curve(points: list[FrontierPoint], kind: str) -> list[tuple[float, float]]:
    return [(p.Q, p.R[kind]) for p in points]


def _run_seed_job(args: tuple[ExperimentConfig, int, Path | None, Sequence[str] | None]) -> SeedResult:
    return run_seed(*args)


def run_sweep(config: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1,
              only: Sequence[str] | None = None) -> SweepResult:
    """Sweep every policy over its hyperparameters and seeds; summarize frontiers."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    args = [(config, s, out, only) for s in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_job, args))
    else:
        results = [_run_seed_job(a) for a in args]

    kinds = [p.kind for p in config.policies if not only or p.kind in only]
    frontiers: dict[str, list[FrontierPoint]] = {}
    extra_curves: dict[str, dict[float, list[tuple[float, float]]]] = {}
    for pcfg in config.policies:
        if pcfg.kind not in kinds:
            continue
        by_hp = {hp: [r.reports[(pcfg.kind, hp)] for r in results] for hp in pcfg.sweep}
        frontiers[pcfg.kind] = build_frontier(by_hp)
        extra_curves[pcfg.kind] = {}
        for off in config.hinge_offsets:
            curve = []
            for hp in pcfg.sweep:
                qs = [r.reports[(pcfg.kind, hp)].Q for r in results]
                hs = [r.extra_hinge[(pcfg.kind, hp)][off] for r in results]
                curve.append((math.fsum(qs) / len(qs), math.fsum(hs) / len(hs)))
            extra_curves[pcfg.kind][off] = sorted(curve)

    all_points = [p for pts in frontiers.values() for p in pts]
    q_max = max((p.Q for p in all_points), default=0.0) or 1.0
    r_max = {k: (max(p.R[k] for p in all_points) or 1.0) for k in RISK_KINDS}
    for off in config.hinge_offsets:
        key = f"hinge@{_fmt(off)}"
        r_max[key] = max((r for curves in extra_curves.values() for _, r in curves[off]), default=0.0) or 1.0

    auc: dict[str, dict[str, float]] = {}
    min_loss: dict[str, dict[str, dict[str, float]]] = {}
    for kind, pts in frontiers.items():
        curves = {k: _risk_curve(pts, k) for k in RISK_KINDS}
        for off in config.hinge_offsets:
            curves[f"hinge@{_fmt(off)}"] = extra_curves[kind][off]
        auc[kind] = {k: normalized_auc(c, q_max, r_max[k]) for k, c in curves.items()}
        min_loss[kind] = {
            k: {_fmt(cost): min_loss_over_frontier(c, cost) for cost in config.costs}
            for k, c in curves.items()
        }
    normalization = {
        "q_max": q_max,
        "r_max": r_max,
        "method": "axes divided by the maximum mean Q and R over all compared policies; "
                  "frontiers extended flat to Q=0 and Q=q_max; trapezoid rule",
        "stderr": "standard error across seeds",
    }
    result = SweepResult(frontiers, auc, min_loss, normalization)
    if out is not None:
        write_sweep_outputs(result, config, out)
    return result


def write_frontier_csv(points: Sequence[FrontierPoint], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONTIER_HEADER)
        for p in points:
            w.writerow([
                repr(float(p.hyperparam)), repr(p.Q), repr(p.stderr_Q),
                repr(p.R["mae"]), repr(p.R["hinge"]), repr(p.R["bin"]),
                repr(p.stderr_R["mae"]), repr(p.stderr_R["hinge"]), repr(p.stderr_R["bin"]),
            ])


def write_sweep_outputs(result: SweepResult, config: ExperimentConfig, out: Path) -> None:
    for kind, pts in result.frontiers.items():
        write_frontier_csv(pts, out / f"frontier_{kind}.csv")
    summary = {
        "config": config.echo(),
        "auc": result.auc,
        "min_loss": result.min_loss,
        "normalization": result.normalization,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
