"""Experiment plans: which method to train, where, with what budget, and how to evaluate it."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..config import ScenarioConfig, canonical_scenario, config_hash
from ..env import ORanEnv, RandomController, RoundRobinController, run_episode
from ..meta import MetaConfig, TaskSampler, adapt, meta_train
from ..rl.policy import ActorPolicy
from ..rl.ppo import PpoConfig, PpoTrainer
from ..training import EVAL_STREAM, TrainLog, episode_seed, evaluate, train_ppo

METHODS = ("ppo-same", "ppo-transfer", "meta-on", "meta-off", "baseline-random",
           "baseline-roundrobin-equalpower")
BASELINES = {"baseline-random": RandomController, "baseline-roundrobin-equalpower": RoundRobinController}


@dataclass(frozen=True)
class Budget:
    ppo_episodes: int = 150
    meta_iterations: int = 10
    adapt_episodes: int = 20
    ttis: int = 200

    def __post_init__(self) -> None:
        if min(self.ppo_episodes, self.meta_iterations, self.adapt_episodes, self.ttis) < 0 or self.ttis < 1:
            raise ValueError("budgets must be non-negative and ttis >= 1")


@dataclass(frozen=True)
class ExperimentPlan:
    method: str = "meta-on"
    train_scenario: str = "UMa"
    test_scenario: str = "InH"
    sweep: tuple[float, ...] = (50.0, 100.0, 200.0, 300.0, 400.0)
    seeds: tuple[int, ...] = (0,)
    budget: Budget = field(default_factory=Budget)
    task_rates: tuple[float, ...] = (100.0, 200.0, 300.0)
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if any(r < 0 for r in self.sweep):
            raise ValueError("sweep rates must be non-negative")
        object.__setattr__(self, "train_scenario", canonical_scenario(self.train_scenario))
        object.__setattr__(self, "test_scenario", canonical_scenario(self.test_scenario))

    def to_dict(self) -> dict:
        return asdict(self)


def plan_hash(plan: ExperimentPlan, cfg: ScenarioConfig) -> str:
    d = plan.to_dict()
    d.pop("out_dir")
    d.pop("seeds")
    return config_hash({"plan": d, "config": cfg.to_dict()})


def make_trainer(env: ORanEnv, seed: int, ppo: PpoConfig | None = None) -> PpoTrainer:
    ppo = ppo or PpoConfig()
    policy = ActorPolicy(env.obs_dim, env.spec, ppo.hidden, seed=seed)
    return PpoTrainer(policy, ppo, seed=seed)


def train_method(plan: ExperimentPlan, cfg: ScenarioConfig, seed: int, ppo: PpoConfig | None = None,
                 meta_cfg: MetaConfig | None = None) -> tuple[PpoTrainer | None, TrainLog]:
    """Train one method for one seed. Baselines return (None, empty log)."""
    b = plan.budget
    cfg = cfg.replace(episode_ttis=b.ttis)
    test_env = ORanEnv(cfg.replace(scenario=plan.test_scenario))
    if plan.method in BASELINES:
        return None, TrainLog()
    trainer = make_trainer(test_env, seed, ppo)
    if plan.method == "ppo-same":
        return trainer, train_ppo(trainer, test_env, b.ppo_episodes, seed)
    if plan.method == "ppo-transfer":
        src = ORanEnv(cfg.replace(scenario=plan.train_scenario))
        return trainer, train_ppo(trainer, src, b.ppo_episodes, seed)
    mode = "on-policy" if plan.method == "meta-on" else "off-policy"
    meta_cfg = meta_cfg or MetaConfig()
    meta_cfg = MetaConfig(**{**asdict(meta_cfg), "mode": mode})
    sampler = TaskSampler(cfg, rates=plan.task_rates, exclude=plan.test_scenario)
    res = meta_train(trainer, sampler, meta_cfg, b.meta_iterations, seed)
    adapt(trainer, test_env, b.adapt_episodes, seed, log=res.log)
    return trainer, res.log


def controller_metrics(controller, env: ORanEnv, seeds) -> list:
    out = []
    for s in seeds:
        _, m = run_episode(controller, env, episode_seed(s, 0, EVAL_STREAM), rng=np.random.default_rng([s, EVAL_STREAM]))
        out.append(m)
    return out


def evaluate_sweep(policy, cfg: ScenarioConfig, scenario: str, rates, eval_seeds, split_mode: str = "heuristic",
                   method: str = "policy") -> list[dict]:
    """One row per (rate, eval seed): EE, latency, reward and violation counts."""
    rows = []
    for rate in rates:
        env = ORanEnv(cfg.replace(scenario=scenario, urllc_arrival_rate=float(rate)), split_mode=split_mode)
        if method in BASELINES:
            metrics = controller_metrics(BASELINES[method](), env, eval_seeds)
        else:
            metrics = evaluate(policy, env, eval_seeds)
        for s, m in zip(eval_seeds, metrics):
            rows.append({
                "rate": float(rate), "eval_seed": int(s), "split_mode": split_mode,
                "mean_ee": m.mean_ee, "mean_latency": m.mean_latency, "max_latency": m.max_latency,
                "mean_reward": m.mean_reward, "hard_violations": m.hard_violations,
                "soft_violations": sum(m.soft_violations.values()), "delivered_ratio": m.delivered_ratio,
            })
    return rows
