import math

import numpy as np
import pytest

from splitsched.agent import (
    Batch, CheckpointVersionError, MalformedCheckpointError, NonFiniteLossError, PolicyParams,
    PPOAgent, PPOHyperparams, RolloutBuffer, ShapeMismatchError, clipped_surrogate,
    discounted_returns, entropy, gae_advantages, init_params, load_checkpoint, policy_forward,
    ppo_objective, save_checkpoint, update, value_forward,
)


def rel_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)


def random_batch(rng, params, n):
    obs = rng.normal(size=(n, params.obs_dim))
    actions = rng.integers(params.n_actions, size=n)
    probs = policy_forward(params, obs)
    # old policy close to the current one, so some ratios sit inside and some outside the clip
    old_logp = np.log(probs[np.arange(n), actions]) + rng.normal(scale=0.3, size=n)
    return Batch(obs, actions, old_logp, rng.normal(size=n), rng.normal(size=n))


def finite_difference_check(seed, h=1e-6):
    rng = np.random.default_rng(seed)
    params = init_params(6, 4, (8, 8), rng)
    params.flat[:] = rng.normal(scale=0.5, size=params.flat.shape)
    batch = random_batch(rng, params, 16)
    hyper = PPOHyperparams(entropy_coef=0.05)
    _, grads = ppo_objective(batch, params, hyper)
    analytic = params.flatten(grads)
    numeric = np.empty_like(analytic)
    for i in range(len(params.flat)):
        keep = params.flat[i]
        params.flat[i] = keep + h
        up, _ = ppo_objective(batch, params, hyper)
        params.flat[i] = keep - h
        down, _ = ppo_objective(batch, params, hyper)
        params.flat[i] = keep
        numeric[i] = (up - down) / (2 * h)
    return analytic, numeric


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    analytic, numeric = finite_difference_check(seed)
    assert rel_error(analytic, numeric).max() < 1e-3


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(0)
    params = init_params(22, 7, rng=rng)
    probs = policy_forward(params, rng.normal(size=(50, 22)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert (probs >= 0).all()


def test_zero_last_layer_is_uniform():
    params = init_params(10, 7)
    params.tensors["actor.w2"][...] = 0
    np.testing.assert_allclose(policy_forward(params, np.ones(10)), 1 / 7, atol=1e-12)


def test_forward_with_constructed_weights():
    params = PolicyParams(2, 2, (2,))
    t = params.tensors
    t["actor.w0"][...] = np.eye(2)
    t["actor.w1"][...] = [[1.0, 0.0], [0.0, 0.0]]
    t["critic.w0"][...] = np.eye(2)
    t["critic.w1"][...] = [[2.0], [3.0]]
    t["critic.b1"][...] = 0.5
    obs = np.array([math.log(3.0), -1.0])
    # hidden = relu(obs) = (ln 3, 0); logits (ln 3, 0) -> probs (3/4, 1/4)
    np.testing.assert_allclose(policy_forward(params, obs), [0.75, 0.25])
    assert value_forward(params, obs) == pytest.approx(2 * math.log(3.0) + 0.5)


def test_value_of_zero_weights():
    params = PolicyParams(5, 3, (4, 4))
    assert value_forward(params, np.ones(5)) == 0.0


def test_observation_width_checked():
    with pytest.raises(ShapeMismatchError):
        policy_forward(init_params(5, 3), np.ones(6))


def test_discounted_returns_examples():
    np.testing.assert_allclose(discounted_returns([1, 1], 0.99), [1.99, 1.0])
    np.testing.assert_allclose(discounted_returns([0, 0, -1], 0.99), [-0.9801, -0.99, -1.0])
    np.testing.assert_allclose(discounted_returns([3, -2, 5], 1e-300), [3, -2, 5])


def test_gae_with_lambda_one_is_return_minus_value():
    r, v = [1.0, -0.5, 2.0], [0.3, 0.1, -0.2]
    np.testing.assert_allclose(gae_advantages(r, v, 0.9, 1.0),
                               discounted_returns(r, 0.9) - np.array(v))


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        PPOHyperparams(gamma=0.0)


def test_clip_arithmetic():
    assert clipped_surrogate(np.array(1.5), np.array(1.0), 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(np.array(0.5), np.array(-1.0), 0.2) == pytest.approx(-0.8)


def test_entropy_maximal_at_uniform():
    rng = np.random.default_rng(1)
    uniform = entropy(np.full(6, 1 / 6))
    assert uniform == pytest.approx(math.log(6))
    for _ in range(50):
        p = rng.dirichlet(np.ones(6))
        assert entropy(p) <= uniform + 1e-12


def _episode(rng, obs_dim, n_actions, steps=20):
    buf = RolloutBuffer()
    for i in range(steps):
        buf.add(rng.normal(size=obs_dim), rng.integers(n_actions), math.log(1 / n_actions),
                -rng.random(), 0.0, i == steps - 1)
    return buf


def test_zero_learning_rate_keeps_params():
    rng = np.random.default_rng(2)
    params = init_params(4, 3, (8, 8), rng)
    new = update(_episode(rng, 4, 3), params, PPOHyperparams(lr=0.0, optimizer="sgd"))
    np.testing.assert_array_equal(new.flat, params.flat)


def test_update_is_deterministic():
    rng = np.random.default_rng(3)
    params = init_params(4, 3, (8, 8), rng)
    buf = _episode(rng, 4, 3)
    a = update(buf, params, PPOHyperparams(lr=1e-2))
    b = update(buf, params, PPOHyperparams(lr=1e-2))
    np.testing.assert_array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, params.flat)


def test_update_needs_finished_episode():
    buf = RolloutBuffer()
    buf.add(np.zeros(4), 0, 0.0, 0.0, 0.0, False)
    with pytest.raises(ValueError):
        update(buf, init_params(4, 3), PPOHyperparams())


def test_non_finite_loss_leaves_params():
    rng = np.random.default_rng(4)
    params = init_params(4, 3, (8, 8), rng)
    before = params.flat.copy()
    buf = _episode(rng, 4, 3)
    buf.rewards[3] = float("nan")
    with pytest.raises(NonFiniteLossError):
        update(buf, params, PPOHyperparams())
    np.testing.assert_array_equal(params.flat, before)


def test_bandit_learns_best_arm():
    hyper = PPOHyperparams(lr=1e-2, minibatch=16, epochs=2, seed=0)
    agent = PPOAgent.create(1, 3, hyper, hidden=(8,))
    obs = np.ones(1)
    for _ in range(500):
        buf = RolloutBuffer()
        for i in range(16):
            a, logp, v = agent.act(obs)
            buf.add(obs, a, logp, 1.0 if a == 0 else 0.0, v, True)
            agent.learn(buf)
            buf = RolloutBuffer()
        if policy_forward(agent.params, obs)[0] > 0.9:
            break
    assert policy_forward(agent.params, obs)[0] > 0.9


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    params = init_params(64, 7, rng=rng)
    path = tmp_path / "policy.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path, 64, 7)
    obs = rng.normal(size=(100, 64))
    np.testing.assert_array_equal(policy_forward(loaded, obs), policy_forward(params, obs))
    np.testing.assert_array_equal(value_forward(loaded, obs), value_forward(params, obs))


def test_checkpoint_wrong_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("NOT-A-CKPT 1\n")
    with pytest.raises(MalformedCheckpointError):
        load_checkpoint(path)


def test_checkpoint_wrong_version(tmp_path):
    path = tmp_path / "v9.ckpt"
    save_checkpoint(init_params(4, 3), path)
    text = path.read_text().split("\n", 1)
    path.write_text(text[0].replace(" 1", " 9") + "\n" + text[1])
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "cut.ckpt"
    save_checkpoint(init_params(4, 3), path)
    path.write_text("\n".join(path.read_text().split("\n")[:8]))
    with pytest.raises(MalformedCheckpointError):
        load_checkpoint(path)


def test_checkpoint_shape_mismatch(tmp_path):
    # N=16 cores with a 6-slot window, loaded into an N=32 environment
    path = tmp_path / "n16.ckpt"
    save_checkpoint(init_params(16 + 18, 7), path)
    with pytest.raises(ShapeMismatchError):
        load_checkpoint(path, 32 + 18, 7)
