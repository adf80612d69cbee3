"""Trajectory collection, entropy-augmented rewards and rewards-to-go."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .envs import Env
from .gaussian_policy import GaussianPolicy, entropy_of, gaussian_log_density
from .nn_core import mlp_predict


@dataclass
class Trajectory:
    """One episode (or episode fragment) collected by a single policy snapshot.

    ``terminated`` marks a true terminal (no bootstrap). Otherwise the
    fragment ended at the time limit or at the batch boundary and the value
    of ``states[-1]`` is bootstrapped; ``complete`` tells the two apart.
    """

    states: np.ndarray
    actions: np.ndarray
    raw_rewards: np.ndarray
    old_log_probs: np.ndarray
    terminated: bool
    truncated: bool
    complete: bool
    soft_rewards: np.ndarray | None = None
    next_state_entropies: np.ndarray | None = None

    def __post_init__(self):
        T = self.raw_rewards.shape[0]
        if self.states.shape[0] != T + 1 or self.actions.shape[0] != T or self.old_log_probs.shape[0] != T:
            raise ConfigError("trajectory sequences are not length-consistent")
        if self.soft_rewards is None:
            self.soft_rewards = self.raw_rewards.copy()

    def __len__(self) -> int:
        return self.raw_rewards.shape[0]

    @property
    def episode_return(self) -> float:
        return float(self.raw_rewards.sum())


@dataclass
class Batch:
    trajectories: list[Trajectory] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def episode_returns(self) -> list[float]:
        return [t.episode_return for t in self.trajectories if t.complete]

    def concat(self, attr: str) -> np.ndarray:
        return np.concatenate([getattr(t, attr) for t in self.trajectories])

    def states(self) -> np.ndarray:
        """``s_t`` for every transition (final states excluded)."""
        return np.concatenate([t.states[:-1] for t in self.trajectories])

    def next_states(self) -> np.ndarray:
        return np.concatenate([t.states[1:] for t in self.trajectories])

    def terminal_mask(self) -> np.ndarray:
        """True on the last transition of every truly terminated episode."""
        masks = []
        for t in self.trajectories:
            m = np.zeros(len(t), dtype=bool)
            m[-1] = t.terminated
            masks.append(m)
        return np.concatenate(masks)


def collect_batch(policy: GaussianPolicy, env: Env, steps_per_batch: int, rng: np.random.Generator) -> Batch:
    """Run ``policy`` until exactly ``steps_per_batch`` transitions are recorded.

    Every episode is reset with a seed drawn from ``rng``; the action noise
    comes from the same stream. The trailing fragment is kept and marked as
    truncated so its last state is bootstrapped.
    """
    if policy.state_dim != env.spec.state_dim or policy.action_dim != env.spec.action_dim:
        raise ConfigError("policy and environment dimensions disagree")
    if steps_per_batch < 1:
        raise ConfigError("steps_per_batch must be >= 1")
    batch = Batch()
    remaining = steps_per_batch
    # the snapshot is frozen during collection, so sigma is computed once
    log_std = policy.clamped_log_std()
    std = np.exp(log_std)
    net = policy.mean_net
    while remaining > 0:
        s = env.reset(int(rng.integers(2**31 - 1)))
        states, actions, rewards, logps = [s], [], [], []
        terminated = truncated = False
        while remaining > 0:
            mu = mlp_predict(net, s)
            a = mu + std * rng.standard_normal(mu.shape)
            logp = float(gaussian_log_density(a, mu, log_std))
            s, r, terminated, truncated = env.step(a)
            states.append(s)
            actions.append(a)
            rewards.append(r)
            logps.append(logp)
            remaining -= 1
            if terminated or truncated:
                break
        complete = terminated or truncated
        batch.trajectories.append(
            Trajectory(
                states=np.array(states),
                actions=np.array(actions),
                raw_rewards=np.array(rewards),
                old_log_probs=np.array(logps),
                terminated=terminated,
                truncated=not terminated,
                complete=complete,
            )
        )
    return batch


def augment_rewards(traj: Trajectory, policy: GaussianPolicy, eta: float) -> np.ndarray:
    """``r^H_t = r_t + eta * H(pi(s_{t+1}))`` with the sampled next state.

    No entropy is added on the transition into a true terminal. Also stores
    the next-state entropies and soft rewards on ``traj``.
    """
    # log_std is state-independent, so H(pi(s)) is one number for every state
    H = np.full(len(traj), entropy_of(policy))
    if traj.terminated:
        H[-1] = 0.0
    traj.next_state_entropies = H
    traj.soft_rewards = traj.raw_rewards + eta * H
    return traj.soft_rewards


def rewards_to_go(traj: Trajectory, gamma: float, value_fn=None) -> np.ndarray:
    """Discounted soft rewards-to-go, bootstrapped with ``value_fn(s_T)`` unless terminated."""
    r = traj.soft_rewards
    acc = 0.0
    if not traj.terminated:
        if value_fn is None:
            raise ConfigError("a value function is needed to bootstrap a truncated trajectory")
        acc = float(np.asarray(value_fn(traj.states[-1])).reshape(()))
    out = np.empty_like(r)
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def greedy_returns(policy: GaussianPolicy, env: Env, episodes: int, seed: int = 0) -> np.ndarray:
    """Undiscounted returns of the mean action, one episode per seed ``seed + i``."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    out = np.empty(episodes)
    for i in range(episodes):
        s = env.reset(seed + i)
        total, done = 0.0, False
        while not done:
            s, r, terminated, truncated = env.step(mlp_predict(policy.mean_net, s))
            total += r
            done = terminated or truncated
        out[i] = total
    return out
