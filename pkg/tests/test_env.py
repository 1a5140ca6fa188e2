import numpy as np
import pytest

from oran_rra import ORanEnv, ScenarioConfig, run_episode
from oran_rra.env import PolicyController, RandomController, RoundRobinController
from oran_rra.network import validate_decision
from oran_rra.objective import HARD, energy_efficiency, reward
from oran_rra.rl.policy import ActorPolicy, AgentActions

SMALL = ScenarioConfig(episode_ttis=6)


def _zero_power(env):
    s, n = env.spec, env.n_agents
    return AgentActions(np.zeros((n, s.n_rb), dtype=int), np.full((n, s.n_rb, s.n_minislots), s.abstain),
                        np.full((n, s.n_rb), -50.0))


def test_reset_shapes_and_determinism():
    env = ORanEnv(SMALL)
    assert env.n_agents == 4
    a = env.reset(3)
    assert a.shape == (4, env.obs_dim)
    assert np.all(np.isfinite(a))
    assert np.array_equal(a, ORanEnv(SMALL).reset(3))
    assert not np.array_equal(a, env.reset(4))


def test_identical_seeds_identical_episodes():
    env = ORanEnv(SMALL)
    _, m1 = run_episode(RandomController(), env, 11)
    _, m2 = run_episode(RandomController(), ORanEnv(SMALL), 11)
    assert m1 == m2


def test_zero_power_step_is_finite():
    env = ORanEnv(SMALL)
    env.reset(0)
    _, r, done, info = env.step(_zero_power(env))
    assert np.isfinite(r) and not done
    assert info.total_power == pytest.approx(env.topo.n_rus * env.topo.static_power_ru + env.topo.static_power_du,
                                             rel=1e-6)
    assert info.ee >= 0.0


def test_step_rejects_wrong_agent_count():
    env = ORanEnv(SMALL)
    env.reset(0)
    a = _zero_power(env)
    with pytest.raises(ValueError):
        env.step(AgentActions(a.rb_user[:2], a.puncture[:2], a.power_raw[:2]))


def test_done_flag_and_single_tti_rollout():
    env = ORanEnv(SMALL.replace(episode_ttis=1))
    env.reset(0)
    *_, done, _ = env.step(_zero_power(env))
    assert done
    rollout, _ = run_episode(RandomController(), env, 0)
    assert len(rollout) == env.n_agents
    assert np.all(rollout.dones == 1.0)


def test_rollout_is_agent_major_with_shared_reward():
    env = ORanEnv(SMALL)
    rollout, m = run_episode(RandomController(), env, 2)
    r = rollout.rewards.reshape(env.n_agents, -1)
    assert np.all(r == r[0])
    assert m.mean_reward == pytest.approx(r[0].mean(), rel=1e-12)
    d = rollout.dones.reshape(env.n_agents, -1)
    assert np.all(d[:, -1] == 1) and np.all(d[:, :-1] == 0)


def test_random_policy_never_breaks_hard_constraints():
    env = ORanEnv(SMALL.replace(episode_ttis=20))
    for seed in range(3):
        _, m = run_episode(RandomController(), env, seed)
        assert m.hard_violations == 0
    pol = ActorPolicy(env.obs_dim, env.spec, (16,), seed=0)
    _, m = run_episode(PolicyController(pol), env, 0)
    assert m.hard_violations == 0


def test_step_accounting_consistent():
    env = ORanEnv(SMALL)
    env.reset(5)
    rng = np.random.default_rng(0)
    a, _ = RoundRobinController().act(None, env, rng)
    routed = env.routed.copy()
    _, r, _, info = env.step(a)
    assert np.array_equal(info.routed, routed)
    assert np.all(info.delivered <= routed)
    assert validate_decision(info.decision, env.topo, env.grid).ok
    floor = env.topo.n_rus * env.topo.static_power_ru + env.topo.static_power_du
    assert info.total_power >= floor
    assert np.all(info.latency >= 0) and np.all(info.latency <= 1.0)
    assert not any(info.constraints[c].satisfied is False for c in HARD)
    expect = reward(info.ee * env.cfg.reward_ee_scale, info.latency, info.embb_rates.sum(axis=1), env.weights)
    assert r == pytest.approx(expect, rel=1e-12)


def test_zero_arrivals_reduce_to_shannon_embb():
    cfg = SMALL.replace(urllc_arrival_rate=0.0)
    env = ORanEnv(cfg)
    env.reset(1)
    a, _ = RoundRobinController().act(None, env, np.random.default_rng(0))
    gain = env.channel.gain_embb.copy()
    noise = env.channel.noise_power
    _, r, _, info = env.step(a)
    p = info.decision.rb_power()
    rx = gain * p[None]
    zeta = rx / (rx.sum(axis=1, keepdims=True) - rx + noise)
    theta = info.decision.theta.transpose(0, 2, 1)
    rates = (env.grid.rb_bandwidth * np.log2(1 + zeta) * theta).sum(axis=2).T
    assert np.allclose(info.embb_rates, rates, rtol=1e-12)
    assert np.all(info.delivered == 0) and np.all(info.urllc_rates == 0)
    ee = energy_efficiency(rates, 0.0, p, env.topo.n_rus, env.topo.static_power_ru, env.topo.static_power_du)
    assert info.ee == pytest.approx(ee, rel=1e-12)
    expect = reward(ee * cfg.reward_ee_scale, info.latency, rates.sum(axis=1), env.weights)
    assert r == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("mode", ["heuristic", "oracle", "uniform"])
def test_split_modes_are_distributions(mode):
    env = ORanEnv(SMALL, split_mode=mode)
    env.reset(0)
    for _ in range(3):
        assert np.allclose(env.split.sum(axis=0), 1.0)
        assert np.all(env.split >= 0)
        env.step(_zero_power(env))
    if mode == "uniform":
        assert np.allclose(env.split, 1.0 / env.n_agents)


def test_tti_log_written(tmp_path):
    env = ORanEnv(SMALL)
    path = tmp_path / "tti.csv"
    run_episode(RandomController(), env, 0, tti_log=path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert len(lines) == 2 + SMALL.episode_ttis
