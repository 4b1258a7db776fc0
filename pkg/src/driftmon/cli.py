"""Command line entry point: ``driftmon run|sweep|certify|gen``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .bounds import certify_risk, tolerance_constants
from .errors import DriftmonError
from .harness import (
    ExperimentConfig,
    RunContext,
    build_policy,
    compute_signals,
    load_config,
    prepare_stream,
    reference_accuracy,
    run_deployment,
    run_sweep,
    stream_truth,
)
from .stream import write_csv


def _load(args) -> ExperimentConfig:
    config = load_config(args.config, args.set or ())
    if args.seed is not None:
        config.seeds = [args.seed]
    return config


def cmd_run(args) -> int:
    config = _load(args)
    pcfg = config.policy(args.policy) if args.policy else config.policies[0]
    hp = args.hyperparam if args.hyperparam is not None else pcfg.sweep[0]
    seed = config.seeds[0]
    events = prepare_stream(config, seed)
    mu0 = reference_accuracy(events, config.truth_window)
    rho = config.rho if config.rho is not None else mu0 - config.rho_offset
    state = build_policy(pcfg, hp, RunContext(mu0, rho, len(events)))
    signals = compute_signals(events, config.detector.build())
    traj = run_deployment(events, state, signals, rho, config.c,
                          truth=stream_truth(events, config.truth_window))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{pcfg.kind}_{hp:.6g}_{seed}.csv"
    traj.to_csv(path)
    report = asdict(traj.report)
    report.update(L_mae=traj.report.L_mae, L_hinge=traj.report.L_hinge, L_bin=traj.report.L_bin,
                  trajectory=str(path))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    only = [args.policy] if args.policy else None
    if only:
        config.policy(args.policy)
    result = run_sweep(config, args.out_dir, jobs=args.jobs, only=only)
    print(json.dumps({"auc": result.auc, "normalization": result.normalization}, indent=2, sort_keys=True))
    return 0


def cmd_certify(args) -> int:
    if args.n is None or args.alpha is None:
        n, alpha = tolerance_constants(args.epsilon, args.delta)
        n = args.n if args.n is not None else n
        alpha = args.alpha if args.alpha is not None else alpha
    else:
        n, alpha = args.n, args.alpha
    cert = certify_risk(args.epsilon, args.delta, n, alpha, args.beta, args.margin)
    out = {"n": n, "alpha": alpha, "query_rate": 1.0 / (1.0 + alpha), **asdict(cert)}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0 if cert.passed else 1


def cmd_gen(args) -> int:
    config = _load(args)
    events = prepare_stream(config, config.seeds[0])
    write_csv(events, args.out)
    print(f"wrote {len(events)} events to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftmon", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="INI experiment config")
        sp.add_argument("--seed", type=int, help="replace the config's seed list with one seed")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
        return sp

    r = with_config(sub.add_parser("run", help="single deployment"))
    r.add_argument("--policy", help="policy section to use (default: first)")
    r.add_argument("--hyperparam", type=float, help="default: first sweep value")
    r.add_argument("--out-dir", default="out")
    r.set_defaults(func=cmd_run)

    s = with_config(sub.add_parser("sweep", help="frontiers and AUC summary"))
    s.add_argument("--policy", help="restrict to one policy")
    s.add_argument("--out-dir", default="out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("certify", help="check the risk guarantee for given constants")
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--n", type=int)
    c.add_argument("--alpha", type=float)
    c.add_argument("--beta", type=float, default=0.0)
    c.add_argument("--margin", type=float, default=0.0)
    c.set_defaults(func=cmd_certify)

    g = with_config(sub.add_parser("gen", help="write a synthetic stream to CSV"))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DriftmonError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
