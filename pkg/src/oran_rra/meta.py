"""First-order MAML over scheduling tasks: on-policy rollouts or replay-buffer batches, then fast adaptation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SCENARIOS, ScenarioConfig, canonical_scenario
from .env import ORanEnv, PolicyController, run_episode
from .network import InfeasibleScenario
from .rl.nn import Mlp, OptimizerState, adam_step, clip_by_global_norm
from .rl.policy import ActorPolicy, AgentActions
from .rl.ppo import PpoConfig, PpoTrainer, Rollout, actor_loss_grad, critic_loss_grad, off_policy_loss_grad
from .training import TrainLog, episode_seed, train_ppo


@dataclass(frozen=True)
class TaskSpec:
    scenario: str
    users_embb: int
    users_urllc: int
    arrival_rate: float
    seed: int

    @property
    def task_id(self) -> str:
        return f"{self.scenario}@{self.arrival_rate:g}#{self.seed}"

    def config(self, base: ScenarioConfig) -> ScenarioConfig:
        return base.replace(scenario=self.scenario, users_embb=self.users_embb, users_urllc=self.users_urllc,
                            urllc_arrival_rate=self.arrival_rate)

    def make_env(self, base: ScenarioConfig, split_mode: str | None = None) -> ORanEnv:
        return ORanEnv(self.config(base), split_mode=split_mode)


class TaskSampler:
    """Uniform over scenarios x arrival-rate grid, optionally holding one scenario out."""

    def __init__(self, base: ScenarioConfig, scenarios=SCENARIOS, rates=(100.0, 200.0, 300.0),
                 exclude: str | None = None):
        pool = [canonical_scenario(s) for s in scenarios]
        if exclude is not None:
            pool = [s for s in pool if s != canonical_scenario(exclude)]
        if not pool:
            raise ValueError("no training scenarios left after exclusion")
        bound = min(base.cu_cycles, base.du_cycles) / base.cycles_per_packet / base.users_urllc
        bad = [r for r in rates if r < 0 or r >= bound]
        if bad:
            raise InfeasibleScenario(f"arrival rates {bad} outside the stable range [0, {bound:g})")
        self.base = base
        self.scenarios = tuple(pool)
        self.rates = tuple(float(r) for r in rates)

    def sample(self, rng: np.random.Generator, count: int) -> list[TaskSpec]:
        out = []
        for _ in range(count):
            out.append(TaskSpec(
                scenario=self.scenarios[rng.integers(len(self.scenarios))],
                users_embb=self.base.users_embb,
                users_urllc=self.base.users_urllc,
                arrival_rate=self.rates[rng.integers(len(self.rates))],
                seed=int(rng.integers(2**31)),
            ))
        return out


class ReplayBuffer:
    """Bounded FIFO of transitions tagged with a task index; uniform sampling."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng([seed, 0xB0F])
        self._store: dict[str, np.ndarray] | None = None
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def _alloc(self, r: Rollout) -> None:
        c = self.capacity
        self._store = {
            "obs": np.empty((c, r.obs.shape[1])),
            "next_obs": np.empty((c, r.obs.shape[1])),
            "rb_user": np.empty((c,) + r.actions.rb_user.shape[1:], dtype=int),
            "puncture": np.empty((c,) + r.actions.puncture.shape[1:], dtype=int),
            "power_raw": np.empty((c,) + r.actions.power_raw.shape[1:]),
            "logp": np.empty(c),
            "rewards": np.empty(c),
            "values": np.empty(c),
            "next_values": np.empty(c),
            "dones": np.empty(c),
            "task": np.empty(c, dtype=int),
        }

    def add(self, rollout: Rollout, task: int = 0) -> None:
        if rollout.next_obs is None:
            raise ValueError("replay transitions need next observations")
        if self._store is None:
            self._alloc(rollout)
        cols = {
            "obs": rollout.obs, "next_obs": rollout.next_obs, "rb_user": rollout.actions.rb_user,
            "puncture": rollout.actions.puncture, "power_raw": rollout.actions.power_raw,
            "logp": rollout.logp, "rewards": rollout.rewards, "values": rollout.values,
            "next_values": rollout.next_values, "dones": rollout.dones,
            "task": np.full(len(rollout), task),
        }
        n = len(rollout)
        idx = (self.head + np.arange(n)) % self.capacity
        if n > self.capacity:  # only the newest transitions survive
            idx, keep = idx[-self.capacity:], slice(n - self.capacity, n)
        else:
            keep = slice(0, n)
        for k, v in cols.items():
            self._store[k][idx] = v[keep]
        self.head = (self.head + n) % self.capacity
        self.size = min(self.capacity, self.size + n)

    def _gather(self, idx: np.ndarray) -> Rollout:
        s = self._store
        return Rollout(s["obs"][idx], AgentActions(s["rb_user"][idx], s["puncture"][idx], s["power_raw"][idx]),
                       s["logp"][idx], s["rewards"][idx], s["values"][idx], s["next_values"][idx],
                       s["dones"][idx], s["next_obs"][idx])

    def sample_indices(self, batch: int, task: int | None = None) -> np.ndarray:
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        pool = np.arange(self.size)
        if task is not None:
            pool = pool[self._store["task"][: self.size] == task]
            if len(pool) == 0:
                raise ValueError(f"no transitions for task {task}")
        return self.rng.choice(pool, size=batch, replace=len(pool) < batch)

    def sample(self, batch: int, task: int | None = None) -> Rollout:
        return self._gather(self.sample_indices(batch, task))


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 1e-2  # alpha
    meta_lr: float = 3e-4  # alpha-hat
    off_policy_lr: float = 1e-3  # eta
    tasks_per_iter: int = 3  # C
    inner_steps: int = 4
    meta_gamma: float = 0.99
    mode: str = "on-policy"  # on-policy | off-policy
    buffer_capacity: int = 100_000
    batch_size: int = 256
    meta_optimizer: str = "adam"  # adam | sgd
    meta_epochs: int = 4
    meta_minibatch: int = 256
    max_grad_norm: float | None = 0.5

    def __post_init__(self) -> None:
        if min(self.inner_lr, self.meta_lr, self.off_policy_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.meta_epochs < 1 or self.meta_minibatch < 1:
            raise ValueError("meta_epochs and meta_minibatch must be positive")
        if self.tasks_per_iter < 1 or self.inner_steps < 0:
            raise ValueError("need tasks_per_iter >= 1 and inner_steps >= 0")
        if self.mode not in ("on-policy", "off-policy"):
            raise ValueError(f"unknown meta mode {self.mode!r}")
        if self.meta_optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown meta optimizer {self.meta_optimizer!r}")


def _sub(params, grads, lr):
    return [p - lr * g for p, g in zip(params, grads)]


def inner_adapt(params: list[np.ndarray], grad_fn, lr: float, steps: int) -> list[np.ndarray]:
    """``steps`` plain gradient steps from a copy of ``params``; ``grad_fn(params) -> (loss, grads)``."""
    theta = [np.array(p, dtype=float, copy=True) for p in params]
    for _ in range(steps):
        _, grads = grad_fn(theta)
        theta = _sub(theta, grads, lr)
    return theta


def meta_update(params: list[np.ndarray], task_grads: list[list[np.ndarray]], lr: float) -> list[np.ndarray]:
    """theta - lr * sum of per-task gradients (first-order)."""
    if not task_grads:
        raise ValueError("need at least one task gradient")
    total = [np.zeros_like(p) for p in params]
    for grads in task_grads:
        if len(grads) != len(params):
            raise ValueError("task gradient does not match parameter list")
        for acc, g, p in zip(total, grads, params):
            if np.shape(g) != p.shape:
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
            acc += g
    return _sub(params, total, lr)


def off_policy_update(policy: ActorPolicy, critic: Mlp, batch: Rollout, lr: float, gamma: float,
                      max_norm: float | None = None) -> list[np.ndarray]:
    """One score-function step on a replay batch; returns the new actor parameters."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    _, grads = off_policy_loss_grad(policy, critic, batch, gamma)
    return _sub(policy.params, clip_by_global_norm(grads, max_norm), lr)


def _policy_grad_fn(policy: ActorPolicy, batch: Rollout, adv: np.ndarray, ppo: PpoConfig, max_norm):
    def fn(params):
        saved = policy.params
        policy.params = params
        try:
            loss, grads = actor_loss_grad(policy, batch.obs, batch.actions, batch.logp, adv, ppo)
        finally:
            policy.params = saved
        return loss, clip_by_global_norm(grads, max_norm)
    return fn


def _td(trainer: PpoTrainer, batch: Rollout, gamma: float) -> np.ndarray:
    """One-step TD errors under the current critic."""
    nv = trainer.values(batch.next_obs) * (1.0 - batch.dones)
    return batch.rewards + gamma * nv - trainer.values(batch.obs)


def _normalized(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8) if len(adv) > 1 else adv


@dataclass
class MetaResult:
    trainer: PpoTrainer
    log: TrainLog
    inner_adapts: int = 0
    meta_updates: int = 0
    outer_steps: int = 0
    off_policy_updates: int = 0
    buffer: ReplayBuffer | None = None
    task_ids: list[str] = field(default_factory=list)

    @property
    def policy(self) -> ActorPolicy:
        return self.trainer.policy


def meta_train(trainer: PpoTrainer, sampler: TaskSampler, meta: MetaConfig, iterations: int, seed: int,
               ttis: int | None = None, split_mode: str | None = None) -> MetaResult:
    """Meta-train ``trainer.policy`` (and its critic) for ``iterations`` meta-iterations."""
    if iterations < 1:
        raise ValueError("budget must allow at least one meta-iteration")
    ppo = trainer.cfg
    policy = trainer.policy
    rng = np.random.default_rng([seed, 0x3E7A])
    meta_opt = OptimizerState.for_params(policy.params, lr=meta.meta_lr)
    buffer = ReplayBuffer(meta.buffer_capacity, seed) if meta.mode == "off-policy" else None
    res = MetaResult(trainer, TrainLog(), buffer=buffer)
    envs: dict[tuple, ORanEnv] = {}
    episode = 0

    def env_for(task: TaskSpec) -> ORanEnv:
        key = (task.scenario, task.arrival_rate)
        if key not in envs:
            envs[key] = task.make_env(sampler.base, split_mode)
        return envs[key]

    def collect(pol: ActorPolicy, env: ORanEnv) -> tuple[Rollout, float]:
        nonlocal episode
        r, m = run_episode(PolicyController(pol), env, episode_seed(seed, episode), ttis,
                           critic=trainer.critic, rng=rng)
        episode += 1
        return r, m.mean_reward

    def fit_critic(rollout: Rollout) -> float:
        _, ret = trainer.advantages(rollout)
        loss, grads = critic_loss_grad(trainer.critic, rollout.obs, ret)
        trainer.critic.params = adam_step(trainer.critic.params,
                                          clip_by_global_norm(grads, meta.max_grad_norm), trainer.critic_opt)
        return loss

    for it in range(iterations):
        tasks = sampler.sample(rng, meta.tasks_per_iter)
        queries, shifts, rewards = [], [], []
        for ti, task in enumerate(tasks):
            env = env_for(task)
            res.task_ids.append(task.task_id)
            if meta.mode == "on-policy":
                support, _ = collect(policy, env)
                adv, _ = trainer.advantages(support)
                fn = _policy_grad_fn(policy, support, _normalized(adv), ppo, meta.max_grad_norm)
                adapted = inner_adapt(policy.params, fn, meta.inner_lr, meta.inner_steps)
                probe = policy.copy()
                probe.params = adapted
                query, r1 = collect(probe, env)
                qadv, _ = trainer.advantages(query)
                fit_critic(support)
                fit_critic(query)
            else:
                task_idx = it * meta.tasks_per_iter + ti
                fresh, r1 = collect(policy, env)
                buffer.add(fresh, task_idx)
                fit_critic(fresh)
                support = buffer.sample(meta.batch_size, task_idx)
                fn = _policy_grad_fn(policy, support, _normalized(_td(trainer, support, meta.meta_gamma)), ppo,
                                     meta.max_grad_norm)
                adapted = inner_adapt(policy.params, fn, meta.inner_lr, meta.inner_steps)
                query = buffer.sample(len(fresh), task_idx)
                qadv = _td(trainer, query, meta.meta_gamma)
            res.inner_adapts += 1
            rewards.append(r1)
            queries.append((query, _normalized(qadv)))
            shifts.append([a - p for a, p in zip(adapted, policy.params)])

        # first-order outer step(s): task gradients taken at the adapted point theta + shift_i
        losses = []
        probe = policy.copy()
        for _ in range(meta.meta_epochs):
            orders = [rng.permutation(len(q)) for q, _ in queries]
            n_mb = max(1, -(-min(len(q) for q, _ in queries) // meta.meta_minibatch))
            for k in range(n_mb):
                task_grads = []
                for (query, qadv), shift, order in zip(queries, shifts, orders):
                    idx = order[k * meta.meta_minibatch : (k + 1) * meta.meta_minibatch]
                    at = [p + d for p, d in zip(policy.params, shift)]
                    loss, g = _policy_grad_fn(probe, query.take(idx), qadv[idx], ppo, meta.max_grad_norm)(at)
                    task_grads.append(g)
                    losses.append(loss)
                if meta.meta_optimizer == "adam":
                    policy.params = adam_step(policy.params, [sum(gs) for gs in zip(*task_grads)], meta_opt)
                else:
                    policy.params = meta_update(policy.params, task_grads, meta.meta_lr)
                res.outer_steps += 1
        res.meta_updates += 1

        if meta.mode == "off-policy":
            batch = buffer.sample(meta.batch_size)
            policy.params = off_policy_update(policy, trainer.critic, batch, meta.off_policy_lr, meta.meta_gamma,
                                              meta.max_grad_norm)
            res.off_policy_updates += 1

        res.log.add(phase="meta", episode=len(res.log.rows), mean_reward=float(np.mean(rewards)),
                    meta_loss=float(np.mean(losses)), tasks="|".join(t.task_id for t in tasks))
    return res


def adapt(trainer: PpoTrainer, env: ORanEnv, episodes: int, seed: int, ttis: int | None = None,
          log: TrainLog | None = None) -> TrainLog:
    """Fast adaptation on the evaluation task: ordinary PPO updates from the meta-trained start."""
    return train_ppo(trainer, env, episodes, seed, ttis, log, label="adapt")
