"""Command line entry point: ``train``, ``evaluate`` and ``report`` subcommands."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from ..config import ConfigError, ScenarioConfig, canonical_scenario, config_hash, load_config
from ..env import ORanEnv
from ..latency import QueueUnstable
from ..network import InfeasibleScenario
from ..rl.policy import ActorPolicy
from .experiments import BASELINES, METHODS, Budget, ExperimentPlan, evaluate_sweep, plan_hash, train_method
from .report import METRICS, RESULT_FIELDS, ReportError, mean_std, rate_trend, write_report

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _scenario(text: str) -> str:
    try:
        return canonical_scenario(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oran-rra", description="Multi-connectivity O-RAN resource allocation experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scenario config (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    common.add_argument("--ttis", type=int, help="TTIs per episode (default: config episode_ttis)")

    t = sub.add_parser("train", parents=[common], help="train one method, one checkpoint and curve per seed")
    t.add_argument("--method", choices=METHODS, default="meta-on")
    t.add_argument("--seed", type=_ints, default=(0,), help="training seeds, e.g. 0,1,2")
    t.add_argument("--scenario", type=_scenario, default="InH", help="test scenario (uma|rma|inh)")
    t.add_argument("--train-scenario", type=_scenario, default="UMa", help="source scenario for transfer")
    t.add_argument("--episodes", type=int, default=Budget.ppo_episodes, help="PPO episodes")
    t.add_argument("--meta-iterations", type=int, default=Budget.meta_iterations)
    t.add_argument("--adapt-episodes", type=int, default=Budget.adapt_episodes)
    t.add_argument("--task-rates", type=_floats, default=(100.0, 200.0, 300.0))

    e = sub.add_parser("evaluate", parents=[common], help="sweep URLLC arrival rate for checkpoints or a baseline")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path, nargs="+", help="checkpoint file(s), one per training seed")
    src.add_argument("--method", choices=tuple(BASELINES), help="untrained baseline controller")
    e.add_argument("--scenario", type=_scenario, default="InH")
    e.add_argument("--sweep", type=_floats, default=(50.0, 100.0, 200.0, 300.0, 400.0))
    e.add_argument("--seed", type=_ints, default=(1000,), help="evaluation seeds")
    e.add_argument("--split-mode", choices=("heuristic", "oracle", "uniform"), default="heuristic")

    r = sub.add_parser("report", help="markdown report and tidy CSVs from evaluation files")
    r.add_argument("results", type=Path, nargs="*")
    r.add_argument("--out", type=Path, default=Path("report"))
    return p


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    return cfg.replace(episode_ttis=args.ttis) if args.ttis else cfg


def cmd_train(args) -> int:
    cfg = _config(args)
    budget = Budget(args.episodes, args.meta_iterations, args.adapt_episodes, cfg.episode_ttis)
    plan = ExperimentPlan(method=args.method, train_scenario=args.train_scenario, test_scenario=args.scenario,
                          seeds=args.seed, budget=budget, task_rates=args.task_rates, out_dir=str(args.out))
    args.out.mkdir(parents=True, exist_ok=True)
    digest = plan_hash(plan, cfg)
    if plan.method in BASELINES:
        marker = args.out / f"{plan.method}.evaluation-only"
        marker.write_text(f"# config_hash={digest} seed={','.join(map(str, plan.seeds))}\n"
                          f"{plan.method} requires no training; run `evaluate --method {plan.method}`.\n")
        print(f"{plan.method}: baseline requires no training; wrote {marker}")
        return EXIT_OK
    for seed in plan.seeds:
        stem = args.out / f"{plan.method}_{plan.test_scenario}_seed{seed}"
        trainer, train_log = train_method(plan, cfg, seed)
        train_log.write_csv(f"{stem}_curve.csv", header=f"config_hash={digest} seed={seed}")
        trainer.policy.save(f"{stem}.ckpt.json", {
            "method": plan.method, "train_scenario": plan.train_scenario, "test_scenario": plan.test_scenario,
            "seed": seed, "config_hash": digest, "config": cfg.to_dict(),
        })
        last = train_log.rows[-1]["mean_reward"] if train_log.rows else float("nan")
        print(f"{plan.method} seed {seed}: final episode reward {last:.4f} -> {stem}.ckpt.json")
    return EXIT_OK


def _write_results(path: Path, rows: list[dict], header: str) -> None:
    summary = []
    for rate in sorted({r["rate"] for r in rows}):
        group = [r for r in rows if r["rate"] == rate]
        mean = {"kind": "mean", "rate": rate}
        std = {"kind": "std", "rate": rate}
        for m in METRICS:
            mean[m], std[m] = mean_std([g[m] for g in group])
        summary += [mean, std]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, restval="", lineterminator="\n")
        w.writeheader()
        for r in rows + summary:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    probe = ORanEnv(cfg.replace(scenario=args.scenario))
    sources: list[tuple[object, int, str]] = []
    if args.method:
        sources.append((None, -1, args.method))
    else:
        for path in args.checkpoint:
            try:
                policy, info = ActorPolicy.load(path)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            if policy.obs_dim != probe.obs_dim or policy.spec != probe.spec:
                raise ConfigError(f"{path}: checkpoint (obs {policy.obs_dim}, {policy.spec}) does not match "
                                  f"topology (obs {probe.obs_dim}, {probe.spec})")
            sources.append((policy, int(info.get("seed", -1)), str(info.get("method", "policy"))))
    methods = {m for _, _, m in sources}
    if len(methods) != 1:
        raise ConfigError(f"checkpoints mix methods {sorted(methods)}; evaluate one method at a time")
    method = methods.pop()
    rows = []
    for policy, train_seed, _ in sources:
        for r in evaluate_sweep(policy, cfg, args.scenario, args.sweep, args.seed, args.split_mode, method):
            rows.append({"kind": "seed", "method": method, "scenario": args.scenario,
                         "train_seed": train_seed, **r})
    digest = config_hash({"config": cfg.to_dict(), "method": method, "scenario": args.scenario,
                          "sweep": list(args.sweep), "split_mode": args.split_mode,
                          "train_seeds": sorted(s for _, s, _ in sources)})
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"eval_{method}_{args.scenario}_{args.split_mode}.csv"
    _write_results(path, rows, f"config_hash={digest} seed={','.join(map(str, args.seed))}")
    rho_ee, _, _ = rate_trend(rows, "mean_ee")
    rho_lat, _, _ = rate_trend(rows, "mean_latency")
    print(f"{path}: {len(args.sweep)} rates; spearman(EE, rate) = {rho_ee:.3f}, "
          f"spearman(latency, rate) = {rho_lat:.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = write_report(args.results, args.out)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InfeasibleScenario, QueueUnstable) as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
