"""Command-line entry point.

Commands: ``train``, ``evaluate``, ``simulate-day``, ``bench-ledger`` and
``make-profile``. Exit status is 0 on success, 2 for usage, configuration,
profile or checkpoint problems, and 3 when training diverges.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from .env import DayAheadEnv
from .evaluation import emit_reports
from .ledger import Ledger, LedgerReport
from .policy_gradient import TrainingDivergence, evaluate_policy, scale_schedule, train_curriculum
from .profiles import DayProfile, PerturbationSpec, ProfileError, load_profile, perturb, save_profile, synthesize_default

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

LOAD_ACCOUNT = "load"
POOL_ACCOUNT = "generator_pool"
BENCH_ACCOUNTS = 8

log = logging.getLogger("energytrader")


class UsageError(Exception):
    pass


def load_run_config(args) -> cfgmod.RunConfig:
    config = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    workers = getattr(args, "workers", None)
    if getattr(args, "deterministic", False):
        workers = 1
    return config.with_overrides(
        seed=args.seed,
        out_dir=args.out_dir,
        curriculum_scale=getattr(args, "curriculum_scale", None),
        episodes=getattr(args, "episodes", None),
        workers=workers,
    )


def load_base_profile(config: cfgmod.RunConfig) -> DayProfile:
    if config.profile == "synthetic":
        return synthesize_default()
    return load_profile(config.profile)


def build_env(config: cfgmod.RunConfig) -> DayAheadEnv:
    return DayAheadEnv(
        load_base_profile(config),
        fleet=config.fleet,
        battery=config.battery,
        weights=config.reward,
        config=config.env,
    )


def _print_summary(summary) -> None:
    print(f"hours: {len(summary.hours)}")
    print(f"fraction of hours with imbalance gap <= 2%: {summary.frac_imbalance_within:.4f}")
    print(f"mean / max imbalance gap (%): {summary.mean_imbalance_gap:.4f} / {summary.max_imbalance_gap:.4f}")
    print(f"fraction of hours with best-bound gap <= 10%: {summary.frac_bound_within:.4f}")
    print(f"mean / max best-bound gap (%): {summary.mean_bound_gap:.4f} / {summary.max_bound_gap:.4f}")


# -- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    config = load_run_config(args)
    env = build_env(config)
    stages = scale_schedule(config.curriculum, config.curriculum_scale)
    out = Path(config.out_dir)
    try:
        params, training_log = train_curriculum(env, stages, config.trainer, workers=config.workers)
    except TrainingDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out.mkdir(parents=True, exist_ok=True)
    training_log.write_csv(out / "training_log.csv")
    position = ckpt.CurriculumPosition(
        stages=tuple(config.curriculum),
        scale=config.curriculum_scale,
        completed_stages=len(stages),
        timesteps=training_log.total_timesteps,
        episodes=training_log.episodes,
    )
    ckpt.save(ckpt.Checkpoint(params, config.trainer, position), out / "checkpoint.json")
    (out / "config.yaml").write_text(cfgmod.serialize(config), encoding="utf-8")
    print(f"trained {training_log.total_timesteps} steps over {training_log.episodes} episodes")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'training_log.csv'}")
    return EXIT_OK


def _load_checkpoint(args) -> ckpt.Checkpoint:
    return ckpt.load(args.checkpoint)


def cmd_evaluate(args) -> int:
    config = load_run_config(args)
    state = _load_checkpoint(args)
    env = build_env(config)
    result = evaluate_policy(state.params, env, episodes=config.episodes, deterministic=True, seed=config.perturbation.seed)
    emit_reports(result.summary, None, config.out_dir)
    _print_summary(result.summary)
    return EXIT_OK


def settle_day(ledger: Ledger, hours, duplicate_hour: int | None = None) -> None:
    """One settlement per evaluated hour, one round per hour, then drain the pool."""
    for acct in (LOAD_ACCOUNT, POOL_ACCOUNT):
        ledger.register(acct)
    for h in hours:
        ledger.submit_settlement(LOAD_ACCOUNT, POOL_ACCOUNT, h.hour, h.price, h.supply)
        if duplicate_hour is not None and h.hour == duplicate_hour:
            ledger.submit_settlement(LOAD_ACCOUNT, POOL_ACCOUNT, h.hour, h.price, h.supply)
        ledger.advance_round()
    while ledger.pending_transactions:
        ledger.advance_round()


def cmd_simulate_day(args) -> int:
    config = load_run_config(args)
    state = _load_checkpoint(args)
    env = build_env(config)
    result = evaluate_policy(state.params, env, episodes=1, deterministic=True, seed=config.perturbation.seed)
    ledger = Ledger(config.ledger)
    settle_day(ledger, result.summary.hours, args.inject_duplicate_hour)
    report = ledger.report()
    emit_reports(result.summary, report, config.out_dir)
    _print_summary(result.summary)
    _print_ledger(report)
    return EXIT_OK


def _print_ledger(report: LedgerReport) -> None:
    rejected = ", ".join(f"{k}={v}" for k, v in report.rejected.items())
    print(f"ledger: submitted {report.submitted}, confirmed {report.confirmed}, rejected {rejected}")
    print(f"mean latency (s): {report.mean_latency_s:.6f}")
    print(f"throughput (txn/s): {report.throughput_tps:.6f}")


def run_bench(ledger: Ledger, n_txns: int, seed: int) -> LedgerReport:
    """Submit ``n_txns`` distinct trades in one round and confirm them all."""
    accounts = [f"acct{i:02d}" for i in range(BENCH_ACCOUNTS)]
    for a in accounts:
        ledger.register(a)
    pairs = [(a, b) for a in accounts for b in accounts if a != b]
    if n_txns > 24 * len(pairs):
        raise UsageError(f"bench supports at most {24 * len(pairs)} distinct trades")
    rng = np.random.default_rng(seed)
    prices = rng.uniform(14.0, 66.0, n_txns)
    quantities = rng.uniform(1.0, 100.0, n_txns)
    trades = [
        (*pairs[i // 24], i % 24, float(round(prices[i], 2)), float(round(quantities[i], 3)))
        for i in range(n_txns)
    ]
    ledger.submit_batch(trades)
    while ledger.pending_transactions:
        ledger.advance_round()
    return ledger.report()


def cmd_bench_ledger(args) -> int:
    config = load_run_config(args)
    if args.n_txns < 0:
        raise UsageError("--n-txns must be >= 0")
    report = run_bench(Ledger(config.ledger), args.n_txns, config.perturbation.seed)
    report.write(config.out_dir)
    _print_ledger(report)
    return EXIT_OK


def cmd_make_profile(args) -> int:
    config = load_run_config(args)
    base = load_profile(args.source) if args.source else load_base_profile(config)
    amplitude = config.perturbation.amplitude if args.amplitude is None else args.amplitude
    profile = perturb(base, PerturbationSpec(amplitude, config.perturbation.seed))
    out = Path(args.output) if args.output else Path(config.out_dir) / "profile.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_profile(profile, out)
    print(f"wrote {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides trainer and perturbation seeds")
    common.add_argument("--out-dir", help="directory for all outputs")
    common.add_argument("--deterministic", action="store_true",
                        help="reproducible mode: single-threaded collection")

    parser = argparse.ArgumentParser(prog="energytrader", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="run the curriculum and write a checkpoint")
    p.add_argument("--curriculum-scale", type=float, help="multiplies every stage budget")
    p.add_argument("--workers", type=int, help="parallel trajectory collectors")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="deterministic evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-day", parents=[common], help="one day with ledger settlement")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inject-duplicate-hour", type=int, metavar="HOUR",
                   help="test hook: submit the settlement for HOUR twice")
    p.set_defaults(func=cmd_simulate_day)

    p = sub.add_parser("bench-ledger", parents=[common], help="settlement latency and throughput benchmark")
    p.add_argument("--n-txns", type=int, default=203)
    p.set_defaults(func=cmd_bench_ledger)

    p = sub.add_parser("make-profile", parents=[common], help="synthesize or perturb a day profile CSV")
    p.add_argument("--source", help="profile CSV to perturb (default: config profile)")
    p.add_argument("--amplitude", type=float, help="perturbation amplitude (default: config)")
    p.add_argument("--output", help="CSV path (default: OUT_DIR/profile.csv)")
    p.set_defaults(func=cmd_make_profile)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ckpt.CheckpointError, ProfileError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
