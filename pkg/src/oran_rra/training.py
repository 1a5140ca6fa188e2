"""Episode-level PPO training and greedy evaluation loops."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import EpisodeMetrics, ORanEnv, PolicyController, run_episode
from .rl.ppo import PpoTrainer


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            if not self.rows:
                return
            fields = list(dict.fromkeys(k for r in self.rows for k in r))
            w = csv.DictWriter(fh, fieldnames=fields, restval="")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def episode_seed(seed: int, episode: int, stream: int = 0) -> int:
    """Deterministic per-episode seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, episode, stream]).generate_state(1)[0])


def train_ppo(trainer: PpoTrainer, env: ORanEnv, episodes: int, seed: int, ttis: int | None = None,
              log: TrainLog | None = None, label: str = "ppo") -> TrainLog:
    """One rollout per episode followed by one PPO update."""
    log = log if log is not None else TrainLog()
    controller = PolicyController(trainer.policy)
    rng = np.random.default_rng([seed, 0x7A1])
    for ep in range(episodes):
        rollout, m = run_episode(controller, env, episode_seed(seed, ep), ttis, critic=trainer.critic, rng=rng)
        stats = trainer.update(rollout)
        log.add(phase=label, episode=len(log.rows), mean_reward=m.mean_reward, mean_ee=m.mean_ee,
                mean_latency=m.mean_latency, actor_loss=stats.actor_loss, critic_loss=stats.critic_loss)
    return log


EVAL_STREAM = 0xE7A1


def evaluate(policy, env: ORanEnv, seeds, ttis: int | None = None, greedy: bool = True) -> list[EpisodeMetrics]:
    """Metrics of one episode per evaluation seed (held-out streams)."""
    controller = PolicyController(policy, greedy=greedy)
    out = []
    for s in seeds:
        _, m = run_episode(controller, env, episode_seed(s, 0, EVAL_STREAM), ttis,
                           rng=np.random.default_rng([s, EVAL_STREAM]))
        out.append(m)
    return out
