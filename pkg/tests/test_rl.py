import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oran_rra.config import ScenarioConfig
from oran_rra.network import ResourceGrid, build_topology, validate_decision
from oran_rra.rl.nn import Mlp, OptimizerState, adam_step, flatten, grad_check, unflatten
from oran_rra.rl.policy import ActionSpec, ActorPolicy, AgentActions, decode_joint
from oran_rra.rl.ppo import (
    PpoConfig,
    PpoTrainer,
    Rollout,
    actor_loss_grad,
    critic_loss_grad,
    gae_advantages,
    off_policy_loss_grad,
    off_policy_objective,
    ppo_objective,
    value_loss,
)


def gae_brute(r, v, nv, d, gamma, lam):
    """Direct double sum of discounted TD errors, truncated at the first done."""
    n = len(r)
    delta = [r[t] + gamma * nv[t] * (1 - d[t]) - v[t] for t in range(n)]
    adv = []
    for t in range(n):
        total, w = 0.0, 1.0
        for i in range(t, n):
            total += w * delta[i]
            if d[i]:
                break
            w *= gamma * lam
        adv.append(total)
    return np.array(adv)


# ---------------------------------------------------------------- MLP / Adam

def test_mlp_zero_weights_output_bias():
    net = Mlp((3, 4, 2))
    net.params = [np.zeros_like(p) for p in net.params]
    net.params[-1] = np.array([0.5, -2.0])
    assert np.array_equal(net.forward(np.ones((1, 3)))[0], [0.5, -2.0])


def test_mlp_last_layer_linear_and_deterministic():
    net = Mlp((5, 8, 8, 3), np.random.default_rng(1))
    x = np.random.default_rng(2).standard_normal((4, 5))
    out = net.forward(x)
    assert np.array_equal(out, net.forward(x))
    scaled = net.copy()
    scaled.params[-2] = scaled.params[-2] * 3.0
    scaled.params[-1] = scaled.params[-1] * 3.0
    assert np.allclose(scaled.forward(x), 3.0 * out)
    with pytest.raises(ValueError):
        net.forward(np.ones((1, 4)))


def test_adam_examples():
    p = [np.array([1.0, -2.0])]
    st_ = OptimizerState.for_params(p, lr=1e-3)
    same = adam_step(p, [np.zeros(2)], st_)
    assert np.array_equal(same[0], p[0]) and st_.step == 1
    st1, st2 = OptimizerState.for_params(p, lr=1e-3), OptimizerState.for_params(p, lr=1e-3)
    a, b = adam_step(p, [np.ones(2)], st1), adam_step(p, [np.ones(2)], st2)
    assert np.array_equal(a[0], b[0])
    assert np.allclose(p[0] - a[0], 1e-3, rtol=1e-6)
    with pytest.raises(FloatingPointError):
        adam_step(p, [np.array([np.nan, 0.0])], OptimizerState.for_params(p))


def test_grad_check_quadratic():
    c = np.array([1.0, -3.0, 2.0])
    assert grad_check(lambda x: (0.5 * float(((x - c) ** 2).sum()), x - c), np.zeros(3)) < 1e-8


def test_flatten_roundtrip():
    arrs = [np.arange(6.0).reshape(2, 3), np.arange(2.0)]
    back = unflatten(flatten(arrs), arrs)
    assert all(np.array_equal(a, b) for a, b in zip(arrs, back))


# ---------------------------------------------------------------- GAE / losses

def test_gae_examples():
    adv, ret = gae_advantages([1.0], [0.0], [0.0], [1.0], 1.0, 1.0)
    assert adv[0] == 1.0 and ret[0] == 1.0
    rng = np.random.default_rng(0)
    r, v, nv = rng.standard_normal((3, 6))
    d = np.zeros(6)
    adv, _ = gae_advantages(r, v, nv, d, 0.99, 0.0)
    assert np.allclose(adv, r + 0.99 * nv - v, atol=1e-14)
    with pytest.raises(ValueError):
        gae_advantages([1.0, 2.0], [0.0], [0.0], [0.0], 0.99, 0.95)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_gae_matches_brute_force(n, seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v, nv = rng.standard_normal((3, n))
    d = (rng.random(n) < 0.2).astype(float)
    adv, ret = gae_advantages(r, v, nv, d, gamma, lam)
    assert np.allclose(adv, gae_brute(r, v, nv, d, gamma, lam), atol=1e-10, rtol=0)
    assert np.allclose(ret, adv + v, atol=1e-12)


def test_ppo_objective_examples():
    adv = np.array([0.3, -1.2, 2.0])
    loss, _ = ppo_objective(np.zeros(3), np.zeros(3), adv, 0.2)
    assert loss == pytest.approx(-adv.mean())
    assert ppo_objective([np.log(2.0)], [0.0], [1.0], 0.2)[0] == pytest.approx(-1.2)
    assert ppo_objective([np.log(0.5)], [0.0], [-1.0], 0.2)[0] == pytest.approx(0.8)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=8), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_ppo_ratio_invariance(new, shift, seed):
    rng = np.random.default_rng(seed)
    new = np.array(new)
    old = new + rng.normal(0, 0.3, len(new))
    adv = rng.standard_normal(len(new))
    a = ppo_objective(new, old, adv, 0.2)[0]
    b = ppo_objective(new + shift, old + shift, adv, 0.2)[0]
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_value_loss_examples():
    assert value_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    loss, g = value_loss([1.0, -1.0], [0.0, 0.0])
    assert loss == 1.0 and np.allclose(g, [1.0, -1.0])
    with pytest.raises(ValueError):
        value_loss([1.0], [1.0, 2.0])


def test_off_policy_objective_basics():
    loss, g = off_policy_objective([0.5, -1.0], [0.0, 0.0])
    assert loss == 0.0 and np.all(g == 0)
    with pytest.raises(ValueError):
        off_policy_objective([], [])


# ---------------------------------------------------------------- policy and gradients

SPEC = ActionSpec(n_rb=2, n_embb=3, n_urllc=2, n_minislots=3)


def _batch(seed, n=12, obs_dim=7):
    rng = np.random.default_rng(seed)
    pol = ActorPolicy(obs_dim, SPEC, hidden=(8, 8, 8), seed=seed, init_log_std=-0.3)
    pol.net.params = [p + rng.normal(0, 0.3, p.shape) for p in pol.net.params]
    obs = rng.standard_normal((n, obs_dim))
    act, logp = pol.sample(obs, rng)
    return pol, obs, act, logp, rng


def _flat_loss(pol, fn):
    like = pol.params

    def f(x):
        pol.params = unflatten(x, like)
        loss, grads = fn()
        return loss, flatten(grads)

    return f, flatten(like)


@pytest.mark.parametrize("seed", range(20))
def test_ppo_actor_gradient(seed):
    pol, obs, act, logp, rng = _batch(seed)
    old = logp + rng.normal(0, 0.1, len(logp))
    adv = rng.standard_normal(len(logp))
    cfg = PpoConfig(entropy_coef=0.05)
    f, x0 = _flat_loss(pol, lambda: actor_loss_grad(pol, obs, act, old, adv, cfg))
    assert grad_check(f, x0, step=1e-5, n_coords=80, rng=rng) < 1e-4


def test_value_loss_gradient_wrt_values():
    rng = np.random.default_rng(7)
    ret = rng.standard_normal(16)
    assert grad_check(lambda v: value_loss(v, ret), rng.standard_normal(16)) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_critic_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    critic = Mlp((6, 8, 8, 1), rng, out_scale=1.0)
    obs, ret = rng.standard_normal((10, 6)), rng.standard_normal(10)

    def f(x):
        critic.params = unflatten(x, critic.params)
        loss, grads = critic_loss_grad(critic, obs, ret)
        return loss, flatten(grads)

    assert grad_check(f, flatten(critic.params), n_coords=80, rng=rng) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_off_policy_gradient(seed):
    pol, obs, act, logp, rng = _batch(200 + seed)
    critic = Mlp((7, 8, 1), rng, out_scale=1.0)
    n = len(obs)
    batch = Rollout(obs, act, logp, rng.standard_normal(n), np.zeros(n), np.zeros(n),
                    (rng.random(n) < 0.2).astype(float), rng.standard_normal((n, 7)))
    f, x0 = _flat_loss(pol, lambda: off_policy_loss_grad(pol, critic, batch, 0.99))
    assert grad_check(f, x0, n_coords=80, rng=rng) < 1e-4


def test_log_prob_consistent_with_sample():
    pol, obs, act, logp, _ = _batch(3)
    assert np.allclose(pol.log_prob(obs, act), logp)
    lp, ent, _ = pol.evaluate(obs, act)
    assert np.allclose(lp, logp) and np.all(np.isfinite(ent))


def test_uniform_logits_sample_evenly():
    spec = ActionSpec(n_rb=1, n_embb=2, n_urllc=1, n_minislots=1)
    pol = ActorPolicy(3, spec, hidden=(4,), seed=0)
    pol.net.params = [np.zeros_like(p) for p in pol.net.params]
    act, _ = pol.sample(np.zeros((10_000, 3)), np.random.default_rng(0))
    assert abs(act.rb_user.mean() - 0.5) < 0.02
    frac = act.power_fraction
    assert np.all((frac >= 0) & (frac <= 1))


def test_power_fraction_bounded():
    x = np.array([[-1e6, -3.0, 0.0, 4.0, 1e6]])
    frac = AgentActions(np.zeros((1, 5), int), np.zeros((1, 5, 1), int), x).power_fraction
    assert np.all((frac >= 0) & (frac <= 1)) and frac[0, 2] == 0.5


def test_decoded_actions_valid():
    cfg = ScenarioConfig()
    topo, grid = build_topology(cfg), ResourceGrid.from_config(cfg)
    spec = ActionSpec(cfg.rb_macro, topo.n_embb, topo.n_urllc, grid.minislots_per_tti)
    pol = ActorPolicy(10, spec, seed=1, init_log_std=1.0)
    rng = np.random.default_rng(5)
    split = np.full((topo.n_rus, topo.n_urllc), 1.0 / topo.n_rus)
    for _ in range(300):
        act, _ = pol.sample(rng.standard_normal((topo.n_rus, 10)) * 3, rng)
        assert validate_decision(decode_joint(act, topo, grid, split), topo, grid).ok


def test_checkpoint_roundtrip(tmp_path):
    pol, obs, act, logp, _ = _batch(4)
    pol.save(tmp_path / "a.json", {"seed": 4})
    back, info = ActorPolicy.load(tmp_path / "a.json")
    assert info["seed"] == 4 and back.spec == pol.spec
    assert np.array_equal(back.log_prob(obs, act), logp)


def test_trainer_update_improves_surrogate():
    pol, obs, act, logp, rng = _batch(9, n=64)
    trainer = PpoTrainer(pol, PpoConfig(minibatch=32, lr=1e-2), seed=0)
    n = len(obs)
    adv = rng.standard_normal(n)
    roll = Rollout(obs, act, logp, adv, np.zeros(n), np.zeros(n), np.ones(n))
    before = float((pol.log_prob(obs, act) * adv).mean())
    trainer.update(roll)
    after = float((pol.log_prob(obs, act) * adv).mean())
    assert after > before
