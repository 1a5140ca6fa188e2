"""Factored hybrid action policy and its decoding into a joint resource-grid decision.

Per agent (one RU) the actor emits
  * one categorical over eMBB users for every RB (theta),
  * one categorical over URLLC users plus "no puncture" for every (RB, mini-slot) (phi),
  * one Gaussian per RB whose sample is squashed by a sigmoid into a power fraction.
Heads are conditionally independent, so the joint log-prob is their sum.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..network import NetworkTopology, ResourceGrid, ResourceGridDecision
from .nn import Mlp, load_params, save_params

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ActionSpec:
    n_rb: int
    n_embb: int
    n_urllc: int
    n_minislots: int

    @property
    def theta_size(self) -> int:
        return self.n_rb * self.n_embb

    @property
    def phi_size(self) -> int:
        return self.n_rb * self.n_minislots * (self.n_urllc + 1)

    @property
    def out_dim(self) -> int:
        return self.theta_size + self.phi_size + self.n_rb

    @property
    def abstain(self) -> int:
        return self.n_urllc


@dataclass
class AgentActions:
    """Batch of structured actions; leading axis is the batch."""

    rb_user: np.ndarray  # (B, n_rb) int
    puncture: np.ndarray  # (B, n_rb, L) int, value n_urllc = no puncture
    power_raw: np.ndarray  # (B, n_rb) pre-squash Gaussian sample

    @property
    def power_fraction(self) -> np.ndarray:
        return sigmoid(self.power_raw)

    def __len__(self) -> int:
        return len(self.rb_user)

    def take(self, idx) -> "AgentActions":
        return AgentActions(self.rb_user[idx], self.puncture[idx], self.power_raw[idx])

    @staticmethod
    def concat(items: list["AgentActions"]) -> "AgentActions":
        return AgentActions(
            np.concatenate([a.rb_user for a in items]),
            np.concatenate([a.puncture for a in items]),
            np.concatenate([a.power_raw for a in items]),
        )


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _sample_categorical(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Gumbel-max
    g = -np.log(-np.log(rng.uniform(1e-300, 1.0, size=logp.shape)))
    return np.argmax(logp + g, axis=-1)


class ActorPolicy:
    def __init__(self, obs_dim: int, spec: ActionSpec, hidden=(64, 64, 64), seed: int = 0,
                 init_log_std: float = -0.5, power_bias: float = 0.0):
        self.spec = spec
        self.obs_dim = obs_dim
        self.net = Mlp((obs_dim, *hidden, spec.out_dim), np.random.default_rng(seed))
        self.net.params[-1][-spec.n_rb:] = power_bias
        self.log_std = np.full(spec.n_rb, float(init_log_std))

    # parameters are the MLP weights followed by the log std vector
    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params + [self.log_std]

    @params.setter
    def params(self, values: list[np.ndarray]) -> None:
        self.net.params = [np.array(v, dtype=float) for v in values[:-1]]
        self.log_std = np.array(values[-1], dtype=float)

    def save(self, path, meta: dict | None = None) -> None:
        """Write the actor weights plus the shapes needed to rebuild it."""
        tensors = {f"p{i}": p for i, p in enumerate(self.params)}
        info = {"obs_dim": self.obs_dim, "spec": dataclasses.asdict(self.spec),
                "hidden": list(self.net.sizes[1:-1]), **(meta or {})}
        save_params(path, tensors, info)

    @classmethod
    def load(cls, path) -> tuple["ActorPolicy", dict]:
        tensors, info = load_params(path)
        try:
            policy = cls(int(info["obs_dim"]), ActionSpec(**info["spec"]), tuple(info["hidden"]))
            policy.params = [tensors[f"p{i}"] for i in range(len(tensors))]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: incomplete actor checkpoint ({exc})") from exc
        return policy, info

    def copy(self) -> "ActorPolicy":
        out = ActorPolicy.__new__(ActorPolicy)
        out.spec = self.spec
        out.obs_dim = self.obs_dim
        out.net = self.net.copy()
        out.log_std = self.log_std.copy()
        return out

    def _heads(self, obs: np.ndarray, keep: bool = False):
        s = self.spec
        out, acts = self.net.forward(np.atleast_2d(obs), keep=True)
        b = out.shape[0]
        t_end = s.theta_size
        p_end = t_end + s.phi_size
        theta = out[:, :t_end].reshape(b, s.n_rb, s.n_embb)
        phi = out[:, t_end:p_end].reshape(b, s.n_rb, s.n_minislots, s.n_urllc + 1)
        mu = out[:, p_end:]
        return (theta, phi, mu, acts) if keep else (theta, phi, mu)

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[AgentActions, np.ndarray]:
        theta, phi, mu = self._heads(obs)
        lt, lp = _log_softmax(theta), _log_softmax(phi)
        rb_user = _sample_categorical(lt, rng)
        punct = _sample_categorical(lp, rng)
        x = mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)
        act = AgentActions(rb_user, punct, x)
        return act, self._logp_from(lt, lp, mu, act)

    def mode(self, obs: np.ndarray) -> AgentActions:
        theta, phi, mu = self._heads(obs)
        return AgentActions(theta.argmax(-1), phi.argmax(-1), mu.copy())

    def _logp_from(self, lt, lp, mu, act: AgentActions) -> np.ndarray:
        b = len(act)
        lt_a = np.take_along_axis(lt, act.rb_user[..., None], -1)[..., 0].sum(axis=1)
        lp_a = np.take_along_axis(lp, act.puncture[..., None], -1)[..., 0].sum(axis=(1, 2))
        z = (act.power_raw - mu) / np.exp(self.log_std)
        lg = (-0.5 * z * z - self.log_std - 0.5 * LOG_2PI).sum(axis=1)
        return (lt_a + lp_a + lg).reshape(b)

    def log_prob(self, obs: np.ndarray, act: AgentActions) -> np.ndarray:
        theta, phi, mu = self._heads(obs)
        return self._logp_from(_log_softmax(theta), _log_softmax(phi), mu, act)

    def evaluate(self, obs: np.ndarray, act: AgentActions):
        """Log-prob and entropy of ``act`` plus a cache for :meth:`backward`."""
        theta, phi, mu, acts = self._heads(obs, keep=True)
        lt, lp = _log_softmax(theta), _log_softmax(phi)
        logp = self._logp_from(lt, lp, mu, act)
        pt, pp = np.exp(lt), np.exp(lp)
        ht = -(pt * lt).sum(-1)  # (B, n_rb)
        hp = -(pp * lp).sum(-1)  # (B, n_rb, L)
        hg = (self.log_std + 0.5 * (1.0 + LOG_2PI)).sum()
        ent = ht.sum(1) + hp.sum((1, 2)) + hg
        cache = (act, acts, lt, lp, pt, pp, ht, hp, mu)
        return logp, ent, cache

    def backward(self, cache, dlogp: np.ndarray, dent: np.ndarray | None = None) -> list[np.ndarray]:
        """Parameter gradients of sum_b dlogp[b]*logp[b] + dent[b]*entropy[b]."""
        act, acts, lt, lp, pt, pp, ht, hp, mu = cache
        s = self.spec
        b = len(act)
        dlogp = np.asarray(dlogp, dtype=float).reshape(b)
        dent = np.zeros(b) if dent is None else np.asarray(dent, dtype=float).reshape(b)

        oh_t = np.zeros_like(pt)
        np.put_along_axis(oh_t, act.rb_user[..., None], 1.0, -1)
        d_theta = dlogp[:, None, None] * (oh_t - pt) - dent[:, None, None] * pt * (lt + ht[..., None])

        oh_p = np.zeros_like(pp)
        np.put_along_axis(oh_p, act.puncture[..., None], 1.0, -1)
        d_phi = (dlogp[:, None, None, None] * (oh_p - pp)
                 - dent[:, None, None, None] * pp * (lp + hp[..., None]))

        sigma = np.exp(self.log_std)
        z = (act.power_raw - mu) / sigma
        d_mu = dlogp[:, None] * z / sigma
        d_log_std = (dlogp[:, None] * (z * z - 1.0)).sum(0) + dent.sum()

        dout = np.concatenate([d_theta.reshape(b, -1), d_phi.reshape(b, -1), d_mu], axis=1)
        return self.net.backward(acts, dout) + [d_log_std]


def decode_joint(actions: AgentActions, topo: NetworkTopology, grid: ResourceGrid,
                 split: np.ndarray) -> ResourceGridDecision:
    """Joint decision from one action per RU (batch axis = RU index)."""
    d = ResourceGridDecision.zeros(topo, grid)
    d.split = np.array(split, dtype=float)
    n_rus, n_rb = actions.rb_user.shape
    band = np.array([grid.subband_rbs(ru.subband) for ru in topo.rus])
    if band.shape != (n_rus, n_rb):
        raise ValueError("action RB count does not match the RU sub-bands")
    ru = np.repeat(np.arange(n_rus), n_rb)
    rb = band.ravel()
    user = actions.rb_user.ravel()
    d.theta[user, rb, ru] = 1.0
    d.power[user, rb, ru] = (topo.max_power[:, None] / n_rb * actions.power_fraction).ravel()
    n_i, j_i, l_i = np.nonzero(actions.puncture < topo.n_urllc)
    d.phi[band[n_i, j_i], l_i, n_i, actions.puncture[n_i, j_i, l_i]] = 1.0
    return d
