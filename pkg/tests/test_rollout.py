import numpy as np
import pytest

from dtae_rl.envs import CartPoleContinuous, PointMass, make_env
from dtae_rl.exceptions import ConfigError
from dtae_rl.gaussian_policy import GaussianPolicy, ValueNet, log_prob_of
from dtae_rl.rollout import Trajectory, augment_rewards, collect_batch, greedy_returns, rewards_to_go


def make_traj(rewards, terminated):
    T = len(rewards)
    return Trajectory(
        states=np.zeros((T + 1, 1)),
        actions=np.zeros((T, 1)),
        raw_rewards=np.asarray(rewards, dtype=float),
        old_log_probs=np.zeros(T),
        terminated=terminated,
        truncated=not terminated,
        complete=True,
    )


def policy_for(env, seed=0, log_std=0.0):
    return GaussianPolicy.init(np.random.default_rng(seed), env.spec.state_dim, env.spec.action_dim, (16,), log_std)


def test_batch_has_exact_step_count_and_consistent_lengths():
    env = PointMass()
    batch = collect_batch(policy_for(env), env, 450, np.random.default_rng(0))
    assert batch.n_steps == 450
    assert [len(t) for t in batch.trajectories] == [200, 200, 50]
    assert [t.complete for t in batch.trajectories] == [True, True, False]
    assert all(t.truncated and not t.terminated for t in batch.trajectories)
    assert len(batch.episode_returns()) == 2
    assert batch.states().shape == (450, 4) and batch.next_states().shape == (450, 4)


def test_single_step_batch():
    env = PointMass()
    batch = collect_batch(policy_for(env), env, 1, np.random.default_rng(0))
    assert len(batch.trajectories) == 1 and len(batch.trajectories[0]) == 1


def test_collection_is_deterministic():
    env = make_env("PendulumSwingup")
    pol = policy_for(env)
    a = collect_batch(pol, env, 300, np.random.default_rng(3))
    b = collect_batch(pol, make_env("PendulumSwingup"), 300, np.random.default_rng(3))
    np.testing.assert_array_equal(a.concat("actions"), b.concat("actions"))
    np.testing.assert_array_equal(a.states(), b.states())


def test_logged_log_probs_match_recomputation():
    env = PointMass()
    pol = policy_for(env, log_std=-0.5)
    batch = collect_batch(pol, env, 256, np.random.default_rng(1))
    np.testing.assert_allclose(
        batch.concat("old_log_probs"), log_prob_of(pol, batch.states(), batch.concat("actions")), atol=1e-12, rtol=0
    )


def test_terminal_mask_on_cartpole():
    env = CartPoleContinuous()
    pol = policy_for(env, log_std=1.5)
    batch = collect_batch(pol, env, 400, np.random.default_rng(0))
    assert any(t.terminated for t in batch.trajectories)
    mask = batch.terminal_mask()
    ends = np.cumsum([len(t) for t in batch.trajectories]) - 1
    assert set(np.flatnonzero(mask)) == {e for e, t in zip(ends, batch.trajectories) if t.terminated}


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        collect_batch(policy_for(CartPoleContinuous()), PointMass(), 10, np.random.default_rng(0))


def test_augment_rewards():
    pol = GaussianPolicy.init(np.random.default_rng(0), 1, 1, (4,), log_std=0.0)
    traj = make_traj([1.0, 2.0, 3.0], terminated=False)
    np.testing.assert_array_equal(augment_rewards(traj, pol, 0.0), traj.raw_rewards)
    aug = augment_rewards(traj, pol, 1e-3)
    np.testing.assert_allclose(aug - traj.raw_rewards, 1e-3 * 1.4189385332046727, rtol=1e-12)
    doubled = augment_rewards(traj, pol, 2e-3) - traj.raw_rewards
    np.testing.assert_array_equal(doubled, 2.0 * (aug - traj.raw_rewards))
    term = make_traj([1.0, 2.0], terminated=True)
    aug = augment_rewards(term, pol, 0.5)
    assert aug[-1] == 2.0 and aug[0] > 1.0


def test_rewards_to_go_examples():
    assert rewards_to_go(make_traj([1.0], True), 0.99)[0] == 1.0
    assert rewards_to_go(make_traj([1.0, 1.0, 1.0], True), 0.99)[0] == pytest.approx(2.9701, abs=1e-12)
    with pytest.raises(ConfigError):
        rewards_to_go(make_traj([1.0], False), 0.99)


def test_rewards_to_go_matches_double_loop(rng):
    r = rng.normal(size=40)
    traj = make_traj(r, terminated=False)
    v = ValueNet.init(rng, 1, (4,))
    boot = float(v(traj.states[-1]))
    g = rewards_to_go(traj, 0.97, v)
    naive = [sum(0.97**k * r[t + k] for k in range(40 - t)) + 0.97 ** (40 - t) * boot for t in range(40)]
    np.testing.assert_allclose(g, naive, atol=1e-12)
    np.testing.assert_allclose(g[:-1], r[:-1] + 0.97 * g[1:], atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(ConfigError):
        Trajectory(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros(1), np.zeros(1), False, True, False)


def test_greedy_returns_deterministic():
    env = PointMass()
    pol = policy_for(env)
    a = greedy_returns(pol, env, 3, seed=5)
    np.testing.assert_array_equal(a, greedy_returns(pol, PointMass(), 3, seed=5))
    with pytest.raises(ConfigError):
        greedy_returns(pol, env, 0)
