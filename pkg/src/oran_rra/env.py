"""Multi-agent MDP: one agent per RU, shared reward, per-TTI channel/traffic/latency/EE accounting."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .channel import cqi_from_sinr, draw_channel, large_scale_gain
from .config import ScenarioConfig
from .latency import e2e_latency, fronthaul_delay, midhaul_delay, mm1_processing_delay
from .network import (
    NetworkTopology,
    ResourceGrid,
    ResourceGridDecision,
    build_topology,
    build_traffic,
    sample_arrivals,
)
from .objective import ConstraintReport, RewardWeights, check_constraints, energy_efficiency, reward
from .phy import urllc_rate_fbl
from .rl.policy import ActionSpec, AgentActions, decode_joint
from .rl.ppo import Rollout
from .split import SplitConfig, TrafficSplitter

GAIN_DB_RANGE = (-140.0, -40.0)
WARMUP_TTI_OFFSET = 1_000_000
ROUTE_STREAM = 0x5E1


@dataclass(frozen=True)
class EpisodeConfig:
    ttis: int = 200
    split_mode: str = "heuristic"  # heuristic | oracle | uniform
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ttis < 1:
            raise ValueError("an episode needs at least one TTI")
        if self.split_mode not in ("heuristic", "oracle", "uniform"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")


@dataclass
class StepInfo:
    ee: float  # bits per joule
    latency: np.ndarray  # (U_ur,) seconds
    latency_parts: list  # LatencyBreakdown per URLLC user
    constraints: ConstraintReport
    embb_rates: np.ndarray  # (N, U_e) bit/s
    urllc_rates: np.ndarray  # (N, U_ur) achievable bit/s
    delivered: np.ndarray  # (N, U_ur) packets
    routed: np.ndarray  # (N, U_ur) packets
    total_power: float  # W, including static terms
    decision: ResourceGridDecision


def _db_feature(g: np.ndarray) -> np.ndarray:
    lo, hi = GAIN_DB_RANGE
    db = 10.0 * np.log10(np.maximum(g, 1e-30))
    return np.clip(2.0 * (db - lo) / (hi - lo) - 1.0, -1.0, 1.0)


class ORanEnv:
    """Desk-scale cell cluster. Topology is fixed by ``cfg.seed``; ``reset(seed)`` picks the
    fading/arrival streams of one episode."""

    def __init__(self, cfg: ScenarioConfig, split_mode: str | None = None, arrival_rate: float | None = None):
        if cfg.rb_macro != cfg.rb_small:
            raise ValueError("a shared policy needs rb_macro == rb_small")
        self.cfg = cfg
        self.split_mode = split_mode or cfg.split_mode
        EpisodeConfig(cfg.episode_ttis, self.split_mode)  # validates
        self.topo: NetworkTopology = build_topology(cfg)
        self.grid = ResourceGrid.from_config(cfg)
        self.traffic = build_traffic(cfg, self.topo, arrival_rate)
        self.weights = RewardWeights(cfg.upsilon1, cfg.upsilon2, cfg.latency_threshold, cfg.embb_rate_floor)
        self.split_cfg = SplitConfig(cfg.cqi_history, cfg.acf_threshold, cfg.window_min, cfg.window_max,
                                     cfg.split_decay)
        self.path_gain = (large_scale_gain(self.topo, self.topo.embb_positions, cfg),
                          large_scale_gain(self.topo, self.topo.urllc_positions, cfg, stream=1))
        n, m = self.topo.n_rus, self.grid.rb_count
        self.band = np.zeros((n, m), dtype=bool)
        for k, ru in enumerate(self.topo.rus):
            self.band[k, self.grid.subband_rbs(ru.subband)] = True
        self.band_idx = np.array([self.grid.subband_rbs(ru.subband) for ru in self.topo.rus])  # (N, n_rb)
        self.spec = ActionSpec(cfg.rb_macro, self.topo.n_embb, self.topo.n_urllc, self.grid.minislots_per_tti)
        e_cnt, u_cnt = self.topo.users_per_ru()
        self._counts = np.column_stack([e_cnt / self.topo.n_embb, u_cnt / self.topo.n_urllc])
        self.symbols = self.grid.symbols_per_minislot_per_rb
        self.seed = 0
        self.t = 0

    # dimensions
    @property
    def n_agents(self) -> int:
        return self.topo.n_rus

    @property
    def obs_dim(self) -> int:
        s = self.spec
        return s.n_rb * (s.n_embb + s.n_urllc) + 2 * s.n_urllc + 2 + self.n_agents

    def nominal_power(self) -> np.ndarray:
        """Equal split of each RU's budget over its sub-band, shape (N, M)."""
        return self.band * (self.topo.max_power / self.spec.n_rb)[:, None]

    # channel-level helpers
    def _sinr(self, gain: np.ndarray, rb_power: np.ndarray) -> np.ndarray:
        """gain (U, N, M), rb_power (N, M) -> SINR (U, N, M) with co-channel interference."""
        rx = gain * rb_power[None]
        interference = rx.sum(axis=1, keepdims=True) - rx
        return rx / (interference + self.channel.noise_power)

    def _route_rates(self, zeta_u: np.ndarray) -> np.ndarray:
        """Full-RB short-packet rate summed over each RU's band, shape (N, U_ur)."""
        r = urllc_rate_fbl(self.grid.rb_bandwidth, 1.0, zeta_u, self.symbols, self.cfg.target_error)
        return (r * self.band[None]).sum(axis=2).T

    def _observe_splitter(self, rb_power: np.ndarray) -> None:
        zeta_u = self._sinr(self.channel.gain_urllc, rb_power)
        mean_zeta = (zeta_u * self.band[None]).sum(axis=2) / self.spec.n_rb  # (U, N)
        cqi = cqi_from_sinr(mean_zeta).T
        powers = rb_power.sum(axis=1) + self.topo.static_power_ru
        self.splitter.observe(cqi, self._route_rates(zeta_u), powers)

    def _next_split(self, rb_power: np.ndarray) -> np.ndarray:
        n, u = self.topo.n_rus, self.topo.n_urllc
        uniform = np.full((n, u), 1.0 / n)
        if self.split_mode == "uniform":
            return uniform
        if self.split_mode == "heuristic":
            return self.splitter.split()
        # oracle: instantaneous route EE on the upcoming channel
        zeta_u = self._sinr(self.channel.gain_urllc, rb_power)
        ee = self._route_rates(zeta_u) / (rb_power.sum(axis=1) + self.topo.static_power_ru)[:, None]
        tot = ee.sum(axis=0)
        ok = tot > 0
        out = uniform
        out[:, ok] = ee[:, ok] / tot[ok]
        return out

    def _route(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.t, ROUTE_STREAM])
        routed = np.zeros((self.topo.n_rus, self.topo.n_urllc), dtype=int)
        for u, a in enumerate(self.arrivals):
            if a:
                p = self.split[:, u] / self.split[:, u].sum()
                routed[:, u] = rng.multinomial(a, p)
        return routed

    def _advance(self, rb_power: np.ndarray) -> None:
        """Draw channel, split, arrivals and routing for TTI ``self.t``."""
        self.channel = draw_channel(self.topo, self.grid, self.cfg, self.t, self.seed, self.path_gain)
        self.split = self._next_split(rb_power)
        self.arrivals = sample_arrivals(self.traffic, self.t, self.seed)
        self.routed = self._route()

    def observations(self) -> np.ndarray:
        """Per-agent state vectors, shape (N, obs_dim)."""
        n = self.n_agents
        idx = self.band_idx
        ge = self.channel.gain_embb[:, np.arange(n)[:, None], idx]  # (U_e, N, n_rb)
        gu = self.channel.gain_urllc[:, np.arange(n)[:, None], idx]
        return np.concatenate([
            _db_feature(ge).transpose(1, 0, 2).reshape(n, -1),
            _db_feature(gu).transpose(1, 0, 2).reshape(n, -1),
            np.clip(self.routed / 4.0, 0.0, 1.0),
            self.split,
            self._counts,
            np.eye(n),
        ], axis=1)

    def reset(self, seed: int = 0) -> np.ndarray:
        self.seed = int(seed)
        self.splitter = TrafficSplitter(self.topo.n_rus, self.topo.n_urllc, self.split_cfg)
        nominal = self.nominal_power()
        for k in range(self.split_cfg.history):
            self.channel = draw_channel(self.topo, self.grid, self.cfg, WARMUP_TTI_OFFSET + k, self.seed,
                                        self.path_gain)
            self._observe_splitter(nominal)
        self.t = 0
        self._advance(nominal)
        return self.observations()

    def _gate_puncturing(self, actions: AgentActions, zeta_u: np.ndarray):
        """Keep a mini-slot only while its URLLC user still has undelivered packets on that RU.

        Returns per-(N, M, U) mini-slot counts and delivered packets (N, U).
        """
        n_rus, n_u, L = self.topo.n_rus, self.topo.n_urllc, self.grid.minislots_per_tti
        tti = self.grid.tti_duration
        bits = self.traffic.packet_bits
        # bits one mini-slot carries for (user, RU, RB)
        per_slot = urllc_rate_fbl(self.grid.rb_bandwidth, 1.0 / L, zeta_u, self.symbols,
                                  self.cfg.target_error) * tti
        counts = np.zeros((n_rus, self.grid.rb_count, n_u), dtype=int)
        delivered = np.zeros((n_rus, n_u), dtype=int)
        pkts_per_slot = (per_slot / bits).tolist()  # [u][n][m]
        remaining = self.routed.tolist()
        punct = actions.puncture.tolist()
        for n in range(n_rus):
            rem = remaining[n]
            if not any(rem):
                continue
            for j, m in enumerate(self.band_idx[n].tolist()):
                row = [0] * n_u
                for u in punct[n][j]:
                    if u < n_u and rem[u] > 0 and int(row[u] * pkts_per_slot[u][n][m]) < rem[u]:
                        row[u] += 1
                for u in range(n_u):
                    if row[u]:
                        served = min(rem[u], int(row[u] * pkts_per_slot[u][n][m]))
                        delivered[n, u] += served
                        rem[u] -= served
                counts[n, m] = row
        return counts, delivered, per_slot

    def _phi_from_counts(self, counts: np.ndarray) -> np.ndarray:
        """Pack kept mini-slots per (RU, RB) in user order from slot 0, shape (M, L, N, U)."""
        L = self.grid.minislots_per_tti
        ends = np.cumsum(counts, axis=2)  # (N, M, U)
        starts = ends - counts
        slot = np.arange(L)[None, None, :, None]
        mask = (slot >= starts[:, :, None, :]) & (slot < ends[:, :, None, :])  # (N, M, L, U)
        return mask.transpose(1, 2, 0, 3).astype(float)

    def step(self, actions: AgentActions):
        """Apply one action per agent; returns (next observations, shared reward, done, StepInfo)."""
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} agent actions, got {len(actions)}")
        topo, grid, cfg = self.topo, self.grid, self.cfg
        n_rus, L = topo.n_rus, grid.minislots_per_tti
        tti = grid.tti_duration
        bits = self.traffic.packet_bits
        decision = decode_joint(actions, topo, grid, self.split)
        rb_power = decision.rb_power()  # (N, M)

        zeta_e = self._sinr(self.channel.gain_embb, rb_power)  # (U_e, N, M)
        zeta_u = self._sinr(self.channel.gain_urllc, rb_power)
        counts, delivered, per_slot = self._gate_puncturing(actions, zeta_u)

        # gated puncturing pattern back into the decision (first mini-slots per user, in order)
        decision.phi = self._phi_from_counts(counts)

        rho = counts.sum(axis=2) / L  # (N, M)
        theta = decision.theta.transpose(0, 2, 1)  # (U_e, N, M)
        embb_rb = grid.rb_bandwidth * (1.0 - rho)[None] * np.log2(1.0 + zeta_e) * theta
        embb_rates = embb_rb.sum(axis=2).T  # (N, U_e)
        urllc_rates = (counts.transpose(2, 0, 1) * per_slot).sum(axis=2).T / tti  # (N, U_ur)
        delivered_tput = delivered * bits / tti

        tx = float(rb_power.sum())
        total_power = tx + n_rus * topo.static_power_ru + topo.static_power_du
        ee = energy_efficiency(embb_rates, delivered_tput, rb_power, n_rus, topo.static_power_ru,
                               topo.static_power_du)

        latency, parts = self._latencies(urllc_rates)
        arrival_rates = self.arrivals / tti
        cons = check_constraints(decision, embb_rates, urllc_rates, latency, topo, grid, self.weights,
                                 arrival_rates, bits)
        r = reward(ee * cfg.reward_ee_scale, latency, embb_rates.sum(axis=1), self.weights)
        info = StepInfo(ee, latency, parts, cons, embb_rates, urllc_rates, delivered, self.routed.copy(),
                        total_power, decision)

        if self.split_mode == "heuristic":
            self._observe_splitter(rb_power)
        self.t += 1
        done = self.t >= cfg.episode_ttis
        self._advance(rb_power)
        return self.observations(), r, done, info

    def _latencies(self, urllc_rates: np.ndarray):
        topo, cfg = self.topo, self.cfg
        bits = self.traffic.packet_bits
        delta = self.traffic.aggregate_rate
        cu = mm1_processing_delay(topo.cu_service_rate, delta)
        du = mm1_processing_delay(topo.du_service_rate, delta)
        mh = midhaul_delay(delta, bits, topo.midhaul_capacity)
        tti = self.grid.tti_duration
        fh = fronthaul_delay(self.routed / tti, np.ones(topo.n_urllc), bits, topo.fronthaul_capacity)
        out = np.empty(topo.n_urllc)
        parts = []
        for u in range(topo.n_urllc):
            k = self.routed[:, u]
            used = k > 0
            if not used.any():
                acc = 0.0
            elif np.any(urllc_rates[used, u] <= 0):
                acc = cfg.outage_delay
            else:
                acc = min(float(np.max(k[used] * bits / urllc_rates[used, u])), cfg.outage_delay)
            b = e2e_latency(cu, du, mh, fh, acc, cfg.ru_proc_delay)
            parts.append(b)
            out[u] = b.total
        return out, parts


class Controller(Protocol):
    def act(self, obs: np.ndarray, env: ORanEnv, rng: np.random.Generator) -> tuple[AgentActions, np.ndarray]:
        ...


class PolicyController:
    """Samples from (or takes the mode of) an actor policy."""

    def __init__(self, policy, greedy: bool = False):
        self.policy = policy
        self.greedy = greedy

    def act(self, obs, env, rng):
        if self.greedy:
            a = self.policy.mode(obs)
            return a, self.policy.log_prob(obs, a)
        return self.policy.sample(obs, rng)


class RandomController:
    """Uniform over RB owners and puncture targets, uniform power fraction."""

    def act(self, obs, env, rng):
        s, n = env.spec, env.n_agents
        frac = rng.uniform(1e-3, 1 - 1e-3, (n, s.n_rb))
        a = AgentActions(
            rng.integers(0, s.n_embb, (n, s.n_rb)),
            rng.integers(0, s.n_urllc + 1, (n, s.n_rb, s.n_minislots)),
            np.log(frac / (1 - frac)),
        )
        return a, np.zeros(n)


class RoundRobinController:
    """Rotating RB owners at full equal power; mini-slots go to users with routed packets."""

    def act(self, obs, env, rng):
        s, n = env.spec, env.n_agents
        rb_user = (np.arange(s.n_rb)[None, :] + env.t + np.arange(n)[:, None]) % s.n_embb
        punct = np.full((n, s.n_rb, s.n_minislots), s.abstain)
        for k in range(n):
            waiting = np.nonzero(env.routed[k])[0]
            if len(waiting):
                slots = np.arange(s.n_rb * s.n_minislots) % len(waiting)
                punct[k] = waiting[slots].reshape(s.n_rb, s.n_minislots)
        return AgentActions(rb_user, punct, np.full((n, s.n_rb), 10.0)), np.zeros(n)


@dataclass
class EpisodeMetrics:
    mean_reward: float
    mean_ee: float  # bits per joule
    mean_latency: float  # seconds
    max_latency: float
    hard_violations: int
    soft_violations: dict[str, int] = field(default_factory=dict)
    embb_throughput: float = 0.0  # bit/s, mean over TTIs
    delivered_ratio: float = 1.0

    def as_row(self) -> dict:
        row = {k: v for k, v in self.__dict__.items() if k != "soft_violations"}
        row.update({f"soft_{k}": v for k, v in self.soft_violations.items()})
        return row


TTI_FIELDS = ("tti", "reward", "ee", "mean_latency", "max_latency", "hard_violations", "soft_violations")


def run_episode(controller: Controller, env: ORanEnv, seed: int, ttis: int | None = None,
                critic=None, rng: np.random.Generator | None = None,
                tti_log: str | Path | None = None) -> tuple[Rollout, EpisodeMetrics]:
    """Roll one episode. The rollout is agent-major (agent 0's TTIs first), with ``dones`` set on
    each agent's last TTI so advantage sums stop at agent boundaries."""
    ttis = env.cfg.episode_ttis if ttis is None else ttis
    if ttis < 1:
        raise ValueError("an episode needs at least one TTI")
    rng = rng if rng is not None else np.random.default_rng([seed, 0xAC7])
    obs = env.reset(seed)
    n = env.n_agents
    obs_buf = np.empty((ttis, n, env.obs_dim))
    next_buf = np.empty_like(obs_buf)
    logp_buf = np.empty((ttis, n))
    acts: list[AgentActions] = []
    rewards = np.empty(ttis)
    ee = np.empty(ttis)
    lat = np.empty((ttis, env.topo.n_urllc))
    hard = 0
    soft: dict[str, int] = {}
    embb = 0.0
    routed = delivered = 0
    writer = fh = None
    if tti_log is not None:
        fh = open(tti_log, "w", newline="")
        fh.write(f"# config_hash={env.cfg.digest()} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(TTI_FIELDS)
    try:
        for t in range(ttis):
            a, lp = controller.act(obs, env, rng)
            obs_buf[t] = obs
            logp_buf[t] = lp
            acts.append(a)
            obs, r, _, info = env.step(a)
            next_buf[t] = obs
            rewards[t] = r
            ee[t] = info.ee
            lat[t] = info.latency
            h = info.constraints.hard_violations()
            hard += h
            n_soft = 0
            for name in info.constraints.violated():
                if not info.constraints[name].hard:
                    soft[name] = soft.get(name, 0) + 1
                    n_soft += 1
            embb += float(info.embb_rates.sum())
            routed += int(info.routed.sum())
            delivered += int(info.delivered.sum())
            if writer is not None:
                writer.writerow([t, repr(float(r)), repr(float(info.ee)), repr(float(info.latency.mean())),
                                 repr(float(info.latency.max())), h, n_soft])
    finally:
        if fh is not None:
            fh.close()

    flat_obs = obs_buf.transpose(1, 0, 2).reshape(n * ttis, -1)
    flat_next = next_buf.transpose(1, 0, 2).reshape(n * ttis, -1)
    actions = AgentActions(
        np.stack([a.rb_user for a in acts], 1).reshape(n * ttis, -1),
        np.stack([a.puncture for a in acts], 1).reshape(n * ttis, *acts[0].puncture.shape[1:]),
        np.stack([a.power_raw for a in acts], 1).reshape(n * ttis, -1),
    )
    if critic is not None:
        values = critic.forward(flat_obs)[:, 0]
        next_values = critic.forward(flat_next)[:, 0]
    else:
        values = np.zeros(n * ttis)
        next_values = np.zeros(n * ttis)
    dones = np.zeros((n, ttis))
    dones[:, -1] = 1.0
    rollout = Rollout(flat_obs, actions, logp_buf.T.reshape(-1), np.tile(rewards, n), values, next_values,
                      dones.reshape(-1), flat_next)
    metrics = EpisodeMetrics(
        mean_reward=float(rewards.mean()),
        mean_ee=float(ee.mean()),
        mean_latency=float(lat.mean()),
        max_latency=float(lat.max()),
        hard_violations=hard,
        soft_violations=soft,
        embb_throughput=embb / ttis,
        delivered_ratio=delivered / routed if routed else 1.0,
    )
    return rollout, metrics
