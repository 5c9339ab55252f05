"""Command-line entry point: ``jamdeceive {oracle,train,evaluate,sweep,kernel-dump} CONFIG``.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .baselines import build_strategy
from .config import FIGURES, TRAINERS, RunConfig, dump_manifest, load_run_config
from .drl import DqnHyperparams, actor_learner_loop, greedy_policy
from .env import ConfigError, build_kernel, kernel_rows
from .harness import SUMMARY_COLUMNS, run_sweep, summarize, summary_rows
from .io import write_csv, write_text
from .neural import save_snapshot
from .planning import TabularHyperparams, bellman_residual, evaluate_policy, q_learning, value_iteration

KERNEL_COLUMNS = ("energy", "queue", "action", "prob", "next_energy", "next_queue", "delivered", "dropped")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jamdeceive", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", help="YAML run configuration")
        sp.add_argument("--out", help="output directory (overrides config and $JAMDECEIVE_OUTPUT_DIR)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. --set env.p_attack=0.9")
        return sp

    common(sub.add_parser("oracle", help="solve the MDP exactly by value iteration"))
    tr = common(sub.add_parser("train", help="train a tabular or deep Q-learning agent"))
    tr.add_argument("--trainer", choices=("tabular", "dqn"))
    tr.add_argument("--steps", type=int, help="environment steps")
    ev = common(sub.add_parser("evaluate", help="evaluate one strategy by simulation"))
    ev.add_argument("--strategy", choices=("proposed", "dh", "db", "wd"))
    ev.add_argument("--trainer", choices=TRAINERS)
    sw = common(sub.add_parser("sweep", help="sweep attack or arrival probability"))
    sw.add_argument("--figure", choices=FIGURES)
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sub.add_parser("kernel-dump", help="write the enumerated transition kernel"))
    return p


def _overrides(args) -> dict:
    ov = _parse_set(args.set)
    if args.out:
        ov["output_dir"] = args.out
    ov["command"] = args.command
    if args.command == "train":
        if args.trainer:
            ov["trainer.kind"] = args.trainer
        if args.steps is not None:
            if args.steps < 1:
                raise UsageError("--steps must be >= 1: no training requested")
            # the key depends on the trainer, resolved after loading
    if args.command == "evaluate":
        if args.strategy:
            ov["strategy"] = args.strategy
        if args.trainer:
            ov["trainer.kind"] = args.trainer
    if args.command == "sweep" and args.figure:
        ov["sweep.figure"] = args.figure
    return ov


def _load(args) -> RunConfig:
    ov = _overrides(args)
    cfg = load_run_config(args.config, ov)
    if args.command == "train":
        if cfg.trainer.kind not in ("tabular", "dqn"):
            raise UsageError("train needs --trainer tabular or dqn (or trainer.kind in the config)")
        if args.steps is not None:
            key = "steps" if cfg.trainer.kind == "tabular" else "total_steps"
            ov[f"trainer.params.{key}"] = args.steps
            cfg = load_run_config(args.config, ov)
        steps = cfg.trainer.params.get("steps" if cfg.trainer.kind == "tabular" else "total_steps", 1)
        if steps < 1:
            raise UsageError("no training requested (steps must be >= 1)")
    return cfg


def _manifest(out: Path, cfg: RunConfig):
    write_text(out / f"manifest_{cfg.command}.yaml", dump_manifest(cfg))


def cmd_oracle(cfg: RunConfig, out: Path):
    kernel = build_kernel(cfg.env)
    q, policy, iters = value_iteration(cfg.env, cfg.oracle.gamma, cfg.oracle.tol, kernel=kernel)
    resid = bellman_residual(q, cfg.env, cfg.oracle.gamma, kernel)
    q.to_csv(out / "qtable.csv")
    policy.to_csv(out / "policy.csv")
    write_csv(out / "residual.csv", ["iterations", "gamma", "tol", "max_residual", "pairs"],
              [(iters, cfg.oracle.gamma, cfg.oracle.tol, float(resid.max()), resid.size)])
    print(f"value iteration: {iters} iterations, max Bellman residual {resid.max():.3e}")


def cmd_train(cfg: RunConfig, out: Path):
    rng = np.random.default_rng(cfg.trainer.seed)
    ev = cfg.evaluation
    if cfg.trainer.kind == "tabular":
        hp = TabularHyperparams(**cfg.trainer.params)
        ref, _, _ = value_iteration(cfg.env, hp.gamma, cfg.oracle.tol)
        q, curve = q_learning(cfg.env, hp, rng, reference=ref)
        policy = q.greedy()
        q.to_csv(out / "qtable.csv")
        curve.to_csv(out / "train_log.csv")
        print(f"final oracle distance {curve.oracle_distance[-1]:.4f}")
    else:
        hp = DqnHyperparams.from_dict(cfg.trainer.params)
        net, log = actor_learner_loop(cfg.env, hp, rng)
        policy = greedy_policy(net, cfg.env)
        save_snapshot(net, out / "weights.bin")
        log.to_csv(out / "train_log.csv")
    policy.to_csv(out / "policy.csv")
    m = evaluate_policy(cfg.env, policy, ev.horizon, ev.seeds)
    print(f"evaluated throughput {m.avg_throughput:.4f} +- {m.throughput_ci:.4f} packets/slot")


def _metrics_summary(out: Path, m, strategy: str):
    write_csv(out / "summary.csv",
              ["strategy", "throughput", "throughput_ci", "dropped", "dropped_ci", "energy", "seeds", "horizon"],
              [(strategy, m.avg_throughput, m.throughput_ci, m.avg_dropped, m.dropped_ci,
                m.avg_energy, len(m.seeds), m.slots)])


def cmd_evaluate(cfg: RunConfig, out: Path):
    est = build_strategy(cfg.strategy, cfg.env, cfg.trainer.kind, cfg.trainer.params, cfg.trainer.seed)
    m = est.evaluate(cfg.evaluation.horizon, cfg.evaluation.seeds)
    m.to_csv(out / "metrics.csv")
    _metrics_summary(out, m, cfg.strategy)
    print(f"{cfg.strategy}: throughput {m.avg_throughput:.4f} +- {m.throughput_ci:.4f}, "
          f"dropped {m.avg_dropped:.4f} +- {m.dropped_ci:.4f}")


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1):
    result = run_sweep(cfg.sweep_spec(), jobs=jobs)
    fig = cfg.sweep.figure
    result.to_csv(out / f"sweep_{fig}.csv")
    if set(cfg.sweep.strategies) >= {"proposed", "dh", "db", "wd"}:
        write_csv(out / f"summary_{fig}.csv", SUMMARY_COLUMNS, summary_rows(summarize(result)))
    for r in result.rows:
        print(f"{r.param}={r.value:<4} {r.strategy:<9} throughput {r.throughput:.4f}  dropped {r.dropped:.4f}")


def cmd_kernel_dump(cfg: RunConfig, out: Path):
    path = write_csv(out / "kernel.csv", KERNEL_COLUMNS, kernel_rows(cfg.env))
    print(f"wrote {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, UsageError) as exc:
        print(f"jamdeceive: error: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg.output_dir)
    try:
        if args.command == "oracle":
            cmd_oracle(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, args.jobs)
        else:
            cmd_kernel_dump(cfg, out)
        _manifest(out, cfg)
    except Exception as exc:  # noqa: BLE001
        print(f"jamdeceive: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
