import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlelp.errors import InvalidInputError, NumericalDegeneracyError
from dlelp.policy_core import (
    AdamState,
    ApproximatorParams,
    Trajectory,
    advantages,
    discounted_returns,
    forward_policy,
    forward_value,
    gradient_check,
    load_checkpoint,
    optimizer_step,
    param_count,
    policy_logits,
    ppo_clip_loss,
    save_checkpoint,
    value_loss,
)
from oracles import away_from_clip_kinks, masked_softmax_lse, mlp_forward, returns_by_summation

N = 4
SIZES = (2 * N, 6, N)


def _params(seed, sizes=SIZES, scale=0.5):
    rng = np.random.default_rng(seed)
    return ApproximatorParams(tuple(sizes), rng.normal(0, scale, param_count(sizes)))


def _traj(seed, T=5, n=N, rewards=None):
    rng = np.random.default_rng(seed)
    states = rng.uniform(0, 1, (T, 2 * n))
    masks = rng.random((T, n)) < 0.7
    masks[np.arange(T), rng.integers(0, n, T)] = True
    actions = [int(rng.choice(np.flatnonzero(m))) for m in masks]
    r = np.zeros(T) if rewards is None else np.asarray(rewards, float)
    if rewards is None:
        r[-1] = rng.uniform()
    return Trajectory(states, actions, masks, np.zeros(T), r, np.zeros(T))


# -- parameters --------------------------------------------------------------


def test_param_length():
    p = ApproximatorParams.zeros((3, 5, 2))
    assert len(p.values) == (3 + 1) * 5 + (5 + 1) * 2


def test_zero_width_layer_rejected():
    with pytest.raises(Exception):
        ApproximatorParams.zeros((3, 0, 2))


def test_params_dict_round_trip():
    p = _params(1)
    q = ApproximatorParams.from_dict(p.to_dict())
    assert q.sizes == p.sizes and np.array_equal(q.values, p.values)


# -- forward passes ----------------------------------------------------------


def test_zero_params_uniform():
    probs = forward_policy(ApproximatorParams.zeros(SIZES), np.ones(2 * N), np.ones(N, bool))
    assert np.allclose(probs, 1 / N)


def test_single_mask_entry():
    mask = np.zeros(N, bool)
    mask[2] = True
    probs = forward_policy(_params(0), np.ones(2 * N), mask)
    assert probs.tolist() == [0.0, 0.0, 1.0, 0.0]


def test_all_false_mask_rejected():
    with pytest.raises(InvalidInputError):
        forward_policy(_params(0), np.ones(2 * N), np.zeros(N, bool))


def test_wrong_state_length():
    with pytest.raises(InvalidInputError):
        forward_policy(_params(0), np.ones(3), np.ones(N, bool))


@given(st.integers(0, 10_000))
def test_policy_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed, scale=1.0)
    x = rng.uniform(-1, 1, 2 * N)
    mask = rng.random(N) < 0.6
    mask[int(rng.integers(N))] = True
    logits = mlp_forward(SIZES, p.values, x)
    want = masked_softmax_lse(logits, mask)
    got = forward_policy(p, x, mask)
    assert np.max(np.abs(got - want)) < 1e-12
    assert np.all(got[~mask] == 0.0)
    assert abs(got.sum() - 1.0) < 1e-9


def test_policy_shift_invariance():
    # adding a constant to every output bias shifts all logits equally
    p = _params(3)
    q_vals = p.values.copy()
    q_vals[-N:] += 7.5
    x, mask = np.linspace(0, 1, 2 * N), np.array([True, False, True, True])
    assert np.allclose(forward_policy(p, x, mask), forward_policy(p.with_values(q_vals), x, mask), atol=1e-12)


def test_value_zero_and_bias():
    sizes = (2 * N, 5, 1)
    assert forward_value(ApproximatorParams.zeros(sizes), np.ones(2 * N)) == 0.0
    vals = np.zeros(param_count(sizes))
    vals[-1] = 0.37
    assert forward_value(ApproximatorParams(sizes, vals), np.ones(2 * N)) == pytest.approx(0.37, abs=0)


@given(st.integers(0, 10_000))
def test_value_matches_oracle(seed):
    sizes = (2 * N, 7, 3, 1)
    p = _params(seed, sizes, scale=1.0)
    x = np.random.default_rng(seed).uniform(-1, 1, 2 * N)
    assert abs(forward_value(p, x) - mlp_forward(sizes, p.values, x)[0]) < 1e-12


# -- returns and advantages --------------------------------------------------


def test_returns_examples():
    assert discounted_returns([0, 0, 1], 1.0).tolist() == [1, 1, 1]
    assert discounted_returns([0, 0, 1], 0.5).tolist() == [0.25, 0.5, 1]
    assert discounted_returns([0.3], 0.9).tolist() == [0.3]


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.floats(0.01, 1.0))
def test_returns_recursion_and_oracle(rewards, gamma):
    R = discounted_returns(rewards, gamma)
    for t in range(len(rewards) - 1):
        assert R[t] == rewards[t] + gamma * R[t + 1]
    assert np.allclose(R, returns_by_summation(rewards, gamma), atol=1e-10)


def test_returns_reset_at_episode_boundary():
    R = discounted_returns([0, 1, 0, 2], 0.5, dones=[False, True, False, True])
    assert R.tolist() == [0.5, 1, 1, 2]


def test_bad_gamma():
    with pytest.raises(InvalidInputError):
        discounted_returns([1.0], 0.0)


def test_advantages_zero_critic():
    tr = _traj(0)
    zero_v = ApproximatorParams.zeros((2 * N, 4, 1))
    assert np.allclose(advantages(tr, zero_v, 0.9), discounted_returns(tr.rewards, 0.9))


def test_advantages_perfect_critic():
    # a critic with zero weights and bias R reproduces the return when it is constant
    tr = _traj(1, rewards=[0.0, 0.0, 0.0, 0.0, 0.6])
    vals = np.zeros(param_count((2 * N, 4, 1)))
    vals[-1] = 0.6
    assert np.allclose(advantages(tr, ApproximatorParams((2 * N, 4, 1), vals), 1.0), 0.0)


def test_advantages_brute_force():
    tr = _traj(2, T=6, rewards=[0.1, 0.0, -0.2, 0.0, 0.3, 0.5])
    vp = _params(5, (2 * N, 4, 1))
    V = [mlp_forward(vp.sizes, vp.values, s)[0] for s in tr.states]
    want = [sum(0.8 ** (k - t) * tr.rewards[k] for k in range(t, 6)) - V[t] for t in range(6)]
    assert np.allclose(advantages(tr, vp, 0.8), want, atol=1e-10)


# -- surrogate loss ----------------------------------------------------------


def _formula_loss(tr, new, old, eps, adv):
    out = []
    for t in range(len(tr)):
        pn = masked_softmax_lse(mlp_forward(new.sizes, new.values, tr.states[t]), tr.masks[t])
        po = masked_softmax_lse(mlp_forward(old.sizes, old.values, tr.states[t]), tr.masks[t])
        r = pn[tr.actions[t]] / po[tr.actions[t]]
        out.append(min(r * adv[t], min(max(r, 1 - eps), 1 + eps) * adv[t]))
    return -np.mean(out)


def test_unit_ratio_loss():
    tr, p = _traj(3), _params(3)
    adv = np.array([0.5, -1.0, 2.0, 0.1, -0.3])
    loss, _ = ppo_clip_loss(tr, p, p, 0.2, adv)
    assert loss == pytest.approx(-adv.mean(), abs=1e-12)


@given(st.integers(0, 10_000))
def test_loss_matches_formula(seed):
    tr = _traj(seed)
    new, old = _params(seed, scale=0.8), _params(seed + 1, scale=0.8)
    adv = np.random.default_rng(seed).normal(size=len(tr))
    loss, _ = ppo_clip_loss(tr, new, old, 0.2, adv)
    assert abs(loss - _formula_loss(tr, new, old, 0.2, adv)) < 1e-10


def test_ratio_invariance_under_score_rescaling():
    # multiplying every unnormalised score exp(logit) by c adds log(c) to every logit
    tr = _traj(4)
    new, old = _params(10), _params(11)
    adv = np.linspace(-1, 1, len(tr))
    l1, _ = ppo_clip_loss(tr, new, old, 0.2, adv)
    bump = np.zeros_like(new.values)
    bump[-N:] = np.log(20.0)
    l2, _ = ppo_clip_loss(tr, new.with_values(new.values + bump), old.with_values(old.values + bump), 0.2, adv)
    assert l1 == pytest.approx(l2, abs=1e-12)


def _clip_case(sign):
    """One-step trajectory whose ratio sits far outside the clip range in the direction of ``sign``."""
    sizes = (2, 1, 2)
    tr = Trajectory([[1.0, 0.0]], [0], [[True, True]], [0.0], [1.0], [0.0])
    old = ApproximatorParams.zeros(sizes)  # uniform, pi_old(a) = 0.5
    vals = np.zeros(param_count(sizes))
    vals[-2] = 3.0 * sign  # output bias of action 0
    return tr, old, ApproximatorParams(sizes, vals)


def test_clipped_positive_advantage_zero_gradient():
    tr, old, new = _clip_case(+1)
    loss, grad = ppo_clip_loss(tr, new, old, 0.2, np.array([1.0]))
    assert np.all(grad == 0.0)
    assert loss == pytest.approx(-1.2)


def test_clipped_negative_advantage_zero_gradient():
    tr, old, new = _clip_case(-1)
    loss, grad = ppo_clip_loss(tr, new, old, 0.2, np.array([-1.0]))
    assert np.all(grad == 0.0)
    assert loss == pytest.approx(0.8)


def test_degenerate_old_policy():
    tr, _, _ = _clip_case(1)
    vals = np.zeros(param_count((2, 1, 2)))
    vals[-2] = -1e6
    with pytest.raises(NumericalDegeneracyError):
        ppo_clip_loss(tr, ApproximatorParams.zeros((2, 1, 2)), ApproximatorParams((2, 1, 2), vals), 0.2, np.array([1.0]))


def test_bad_epsilon():
    tr, p = _traj(0), _params(0)
    with pytest.raises(InvalidInputError):
        ppo_clip_loss(tr, p, p, 0.0, np.zeros(len(tr)))


# -- gradients ---------------------------------------------------------------


def test_quadratic_gradient_check():
    fn = lambda x: (float(x @ x), 2 * x)  # noqa: E731
    assert gradient_check(fn, np.linspace(-1, 1, 7), 7, 1e-5) < 1e-8


def test_ppo_gradient_check_random_point():
    tr, old = _traj(7, T=8), _params(7)
    new = old.with_values(old.values + np.random.default_rng(1).normal(0, 0.3, len(old.values)))
    adv = np.random.default_rng(2).normal(size=len(tr))
    assert away_from_clip_kinks(tr, new, old, 0.2)
    err = gradient_check(lambda x: ppo_clip_loss(tr, new.with_values(x), old, 0.2, adv), new.values, 50, 1e-6)
    assert err < 1e-4


def test_ppo_gradient_with_entropy():
    tr, old = _traj(8), _params(8)
    new = old.with_values(old.values * 0.9)
    adv = np.random.default_rng(3).normal(size=len(tr))
    err = gradient_check(lambda x: ppo_clip_loss(tr, new.with_values(x), old, 0.2, adv, 0.05), new.values, 40, 1e-6)
    assert err < 1e-4


def test_value_gradient_check():
    tr = _traj(9)
    vp = _params(9, (2 * N, 5, 1))
    assert gradient_check(lambda x: value_loss(tr, vp.with_values(x), 0.95), vp.values, 40, 1e-6) < 1e-5


def test_value_loss_examples():
    tr = _traj(0, T=2, rewards=[0.0, 1.0])
    zero = ApproximatorParams.zeros((2 * N, 3, 1))
    loss, _ = value_loss(tr, zero, 1.0)  # returns [1, 1]
    assert loss == pytest.approx(1.0)
    vals = np.zeros(param_count((2 * N, 3, 1)))
    vals[-1] = 1.0
    assert value_loss(tr, ApproximatorParams((2 * N, 3, 1), vals), 1.0)[0] == pytest.approx(0.0)


# -- optimizer ---------------------------------------------------------------


def test_adam_zero_gradient():
    x = np.array([1.0, -2.0])
    new, st_ = optimizer_step(x, np.zeros(2), AdamState.for_params(x))
    assert np.array_equal(new, x) and st_.t == 1


def test_adam_first_step_sign():
    x = np.array([0.5, 0.5, 0.5])
    g = np.array([3.0, -0.01, 40.0])
    new, _ = optimizer_step(x, g, AdamState.for_params(x, lr=0.01))
    assert np.allclose(new - x, -0.01 * np.sign(g), atol=1e-7)


def test_adam_quadratic_descends():
    x, state = np.array([1.0]), AdamState.for_params(np.zeros(1), lr=0.001)
    prev = None
    for _ in range(100):
        x, state = optimizer_step(x, 2 * x, state)
        if prev is not None:
            assert abs(x[0]) < prev
        prev = abs(x[0])


def test_adam_length_mismatch():
    with pytest.raises(InvalidInputError):
        optimizer_step(np.zeros(3), np.zeros(2), AdamState.for_params(np.zeros(3)))


def test_checkpoint_round_trip(tmp_path):
    p, v = _params(1), _params(2, (2 * N, 3, 1))
    popt, vopt = AdamState.for_params(p), AdamState.for_params(v)
    popt, vopt = optimizer_step(p.values, np.ones_like(p.values), popt)[1], optimizer_step(v.values, np.ones_like(v.values), vopt)[1]
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, v, popt, vopt, seed=5, step=77, extra={"k": 1})
    ck = load_checkpoint(path)
    assert np.array_equal(ck["policy"].values, p.values) and ck["policy"].sizes == p.sizes
    assert np.array_equal(ck["value_opt"].v, vopt.v) and ck["policy_opt"].t == 1
    assert (ck["seed"], ck["step"], ck["extra"]) == (5, 77, {"k": 1})


def test_logits_batch_consistency():
    p = _params(6)
    xs = np.random.default_rng(0).uniform(size=(3, 2 * N))
    batch = policy_logits(p, xs)
    for i in range(3):
        assert np.allclose(batch[i], policy_logits(p, xs[i]), atol=1e-14)
