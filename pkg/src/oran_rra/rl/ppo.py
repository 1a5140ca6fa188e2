"""PPO pieces: GAE, clipped surrogate, value regression, a score-function objective, and the trainer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Mlp, OptimizerState, adam_step, clip_by_global_norm
from .policy import ActorPolicy, AgentActions


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 4
    minibatch: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lr: float = 3e-4
    critic_lr: float = 1e-3
    max_grad_norm: float | None = 0.5
    normalize_advantages: bool = True
    hidden: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self) -> None:
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be positive")


def gae_advantages(rewards, values, next_values, dones, gamma: float, lam: float):
    """Generalized advantage estimates and returns; the sum is cut at ``dones``."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    nv = np.asarray(next_values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if not (r.shape == v.shape == nv.shape == d.shape):
        raise ValueError("rewards, values, next_values and dones must have equal length")
    delta = r + gamma * nv * (1.0 - d) - v
    adv = np.zeros_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = delta[t] + gamma * lam * (1.0 - d[t]) * acc
        adv[t] = acc
    return adv, adv + v


def ppo_objective(new_logp, old_logp, advantages, clip: float):
    """Negated clipped surrogate and its gradient w.r.t. ``new_logp``."""
    new_logp = np.asarray(new_logp, dtype=float)
    adv = np.asarray(advantages, dtype=float)
    ratio = np.exp(new_logp - np.asarray(old_logp, dtype=float))
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    unclipped_term = ratio * adv
    clipped_term = clipped * adv
    surrogate = np.minimum(unclipped_term, clipped_term)
    n = len(new_logp)
    # gradient flows only where the unclipped term is the active minimum
    active = unclipped_term <= clipped_term
    grad = -np.where(active, unclipped_term, 0.0) / n
    return -float(surrogate.mean()), grad


def value_loss(values, returns):
    """Mean squared error and its gradient w.r.t. ``values``."""
    v = np.asarray(values, dtype=float)
    r = np.asarray(returns, dtype=float)
    if v.shape != r.shape:
        raise ValueError("values and returns must have equal length")
    diff = v - r
    return float(np.mean(diff * diff)), 2.0 * diff / len(v)


def off_policy_objective(logp, td_errors):
    """Score-function loss -mean(td * log pi) and its gradient w.r.t. ``logp``.

    TD errors are treated as constants; descending this loss raises the
    likelihood of actions with positive TD error.
    """
    logp = np.asarray(logp, dtype=float)
    td = np.asarray(td_errors, dtype=float)
    if logp.shape != td.shape or logp.size == 0:
        raise ValueError("need equal-length, non-empty log-probs and TD errors")
    n = len(logp)
    return -float(np.mean(td * logp)), -td / n


@dataclass
class Rollout:
    """Flat batch of agent transitions."""

    obs: np.ndarray
    actions: AgentActions
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    dones: np.ndarray
    next_obs: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx) -> "Rollout":
        return Rollout(
            self.obs[idx], self.actions.take(idx), self.logp[idx], self.rewards[idx],
            self.values[idx], self.next_values[idx], self.dones[idx],
            None if self.next_obs is None else self.next_obs[idx],
        )

    @staticmethod
    def concat(items: list["Rollout"]) -> "Rollout":
        has_next = all(r.next_obs is not None for r in items)
        return Rollout(
            np.concatenate([r.obs for r in items]),
            AgentActions.concat([r.actions for r in items]),
            np.concatenate([r.logp for r in items]),
            np.concatenate([r.rewards for r in items]),
            np.concatenate([r.values for r in items]),
            np.concatenate([r.next_values for r in items]),
            np.concatenate([r.dones for r in items]),
            np.concatenate([r.next_obs for r in items]) if has_next else None,
        )


def actor_loss_grad(policy: ActorPolicy, obs, actions: AgentActions, old_logp, adv, cfg: PpoConfig):
    """PPO actor loss (with entropy bonus) and gradients w.r.t. ``policy.params``."""
    logp, ent, cache = policy.evaluate(obs, actions)
    loss, dlogp = ppo_objective(logp, old_logp, adv, cfg.clip)
    n = len(logp)
    loss -= cfg.entropy_coef * float(ent.mean())
    grads = policy.backward(cache, dlogp, np.full(n, -cfg.entropy_coef / n))
    return loss, grads


def critic_loss_grad(critic: Mlp, obs, returns):
    v, acts = critic.forward(obs, keep=True)
    loss, dv = value_loss(v[:, 0], returns)
    return loss, critic.backward(acts, dv[:, None])


def off_policy_loss_grad(policy: ActorPolicy, critic: Mlp, batch: Rollout, gamma: float):
    """Replay-batch score-function loss; V(s) and V(s') come from the current critic."""
    v = critic.forward(batch.obs)[:, 0]
    nv = critic.forward(batch.next_obs)[:, 0] if batch.next_obs is not None else batch.next_values
    td = batch.rewards + gamma * nv * (1.0 - batch.dones) - v
    logp, _, cache = policy.evaluate(batch.obs, batch.actions)
    loss, dlogp = off_policy_objective(logp, td)
    return loss, policy.backward(cache, dlogp)


@dataclass
class UpdateStats:
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    approx_kl: float = 0.0
    extras: dict = field(default_factory=dict)


class PpoTrainer:
    """Shared actor and critic for all agents, each with its own Adam state."""

    def __init__(self, policy: ActorPolicy, cfg: PpoConfig, seed: int = 0):
        self.policy = policy
        self.cfg = cfg
        self.critic = Mlp((policy.obs_dim, *cfg.hidden, 1), np.random.default_rng(seed + 1), out_scale=1.0)
        self.actor_opt = OptimizerState.for_params(policy.params, lr=cfg.lr)
        self.critic_opt = OptimizerState.for_params(self.critic.params, lr=cfg.critic_lr)
        self.rng = np.random.default_rng(seed + 2)

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(obs)[:, 0]

    def advantages(self, rollout: Rollout) -> tuple[np.ndarray, np.ndarray]:
        return gae_advantages(rollout.rewards, rollout.values, rollout.next_values, rollout.dones,
                              self.cfg.gamma, self.cfg.lam)

    def update(self, rollout: Rollout, adv: np.ndarray | None = None, ret: np.ndarray | None = None) -> UpdateStats:
        """Clipped-surrogate epochs over shuffled minibatches of one rollout."""
        cfg = self.cfg
        if adv is None or ret is None:
            adv, ret = self.advantages(rollout)
        if cfg.normalize_advantages and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(rollout)
        stats = UpdateStats()
        steps = 0
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                idx = order[lo : lo + cfg.minibatch]
                mb = rollout.take(idx)
                a_loss, a_grads = actor_loss_grad(self.policy, mb.obs, mb.actions, mb.logp, adv[idx], cfg)
                a_grads = clip_by_global_norm(a_grads, cfg.max_grad_norm)
                self.policy.params = adam_step(self.policy.params, a_grads, self.actor_opt)
                c_loss, c_grads = critic_loss_grad(self.critic, mb.obs, ret[idx])
                c_grads = clip_by_global_norm(c_grads, cfg.max_grad_norm)
                self.critic.params = adam_step(self.critic.params, c_grads, self.critic_opt)
                stats.actor_loss += a_loss
                stats.critic_loss += c_loss
                steps += 1
        new_logp = self.policy.log_prob(rollout.obs, rollout.actions)
        stats.actor_loss /= steps
        stats.critic_loss /= steps
        stats.approx_kl = float(np.mean(rollout.logp - new_logp))
        return stats
