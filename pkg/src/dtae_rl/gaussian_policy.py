"""Diagonal Gaussian policy head and soft value head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .nn_core import MlpParams, init_mlp, mlp_backward, mlp_forward

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
# entropy of a unit-variance normal, 0.5 * ln(2 pi e)
UNIT_ENTROPY = 0.5 * np.log(2.0 * np.pi * np.e)


def gaussian_log_density(action, mean, log_std):
    """Per-row log density of a diagonal Gaussian, summed over the last axis."""
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(np.asarray(log_std) + UNIT_ENTROPY, axis=-1))


def gaussian_kl(mean_p, log_std_p, mean_q, log_std_q):
    """KL(p || q) for diagonal Gaussians, summed over the last axis."""
    var_p = np.exp(2.0 * log_std_p)
    var_q = np.exp(2.0 * log_std_q)
    d = mean_p - mean_q
    return np.sum(log_std_q - log_std_p + (var_p + d * d) / (2.0 * var_q) - 0.5, axis=-1)


@dataclass
class GaussianPolicy:
    """State-conditioned mean network with a state-independent ``log_std`` vector."""

    mean_net: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != (self.mean_net.out_dim,):
            raise ConfigError(
                f"log_std shape {self.log_std.shape} does not match action dim {self.mean_net.out_dim}"
            )

    @classmethod
    def init(cls, rng, state_dim: int, action_dim: int, hidden=(64, 64), log_std: float = 0.0):
        net = init_mlp(rng, state_dim, action_dim, tuple(hidden), output_gain=0.01)
        return cls(net, np.full(action_dim, float(log_std)))

    @property
    def state_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def mean(self, states) -> np.ndarray:
        return mlp_forward(self.mean_net, states)[0]

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays: mean-network weights/biases then ``log_std``."""
        return [*self.mean_net.arrays(), self.log_std]

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy())


@dataclass
class ValueNet:
    """Scalar soft state-value network."""

    net: MlpParams

    def __post_init__(self):
        if self.net.out_dim != 1:
            raise ConfigError("value network must have a scalar output")

    @classmethod
    def init(cls, rng, state_dim: int, hidden=(64, 64)):
        return cls(init_mlp(rng, state_dim, 1, tuple(hidden), output_gain=1.0))

    def __call__(self, states) -> np.ndarray:
        out, _ = mlp_forward(self.net, states)
        return out[..., 0]

    def arrays(self) -> list[np.ndarray]:
        return self.net.arrays()

    def copy(self) -> "ValueNet":
        return ValueNet(self.net.copy())


def sample_action(policy: GaussianPolicy, state, rng: np.random.Generator, deterministic: bool = False):
    """Draw ``a = mu(s) + sigma * z``; returns ``(action, log_prob)``."""
    mu = policy.mean(state)
    log_std = policy.clamped_log_std()
    if deterministic:
        action = mu.copy()
    else:
        action = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    logp = gaussian_log_density(action, mu, log_std)
    return action, (float(logp) if mu.ndim == 1 else logp)


def log_prob_of(policy: GaussianPolicy, state, action):
    """Log density of ``action`` under ``policy(.|state)``; batched over rows."""
    return gaussian_log_density(np.asarray(action, dtype=np.float64), policy.mean(state), policy.clamped_log_std())


def entropy_of(policy: GaussianPolicy, state=None) -> float:
    """Differential entropy in nats. ``state`` is accepted for API symmetry;
    with a state-independent ``log_std`` the result does not depend on it."""
    return gaussian_entropy(policy.clamped_log_std())


def kl_divergence(p: GaussianPolicy, q: GaussianPolicy, state):
    """Closed-form KL(p(.|s) || q(.|s)); batched over rows of ``state``."""
    if p.action_dim != q.action_dim:
        raise ConfigError("policies have different action dimensions")
    return gaussian_kl(p.mean(state), p.clamped_log_std(), q.mean(state), q.clamped_log_std())


def log_std_grad_mask(policy: GaussianPolicy) -> np.ndarray:
    """d clamp(log_std) / d log_std: 1 strictly inside the clamp range, 0 outside."""
    ls = policy.log_std
    return ((ls > LOG_STD_MIN) & (ls < LOG_STD_MAX)).astype(np.float64)


def log_prob_backward(policy: GaussianPolicy, mu, cache, actions, weights) -> list[np.ndarray]:
    """Gradient of ``sum_t weights[t] * log_prob[t]`` given a cached mean forward pass.

    The result lines up with :meth:`GaussianPolicy.arrays`.
    """
    log_std = policy.clamped_log_std()
    inv_var = np.exp(-2.0 * log_std)
    diff = np.atleast_2d(actions) - mu
    w = np.asarray(weights, dtype=np.float64)[:, None]
    d_mu = w * diff * inv_var
    d_log_std = (w * (diff * diff * inv_var - 1.0)).sum(axis=0) * log_std_grad_mask(policy)
    net_grads = mlp_backward(policy.mean_net, cache, d_mu)
    return [*net_grads.arrays(), d_log_std]


def log_prob_and_grad(policy: GaussianPolicy, states, actions, weights):
    """Batch log-probs plus the gradient of ``sum_t weights[t] * log_prob[t]``."""
    mu, cache = mlp_forward(policy.mean_net, np.atleast_2d(np.asarray(states, dtype=np.float64)))
    logp = gaussian_log_density(np.atleast_2d(actions), mu, policy.clamped_log_std())
    return logp, log_prob_backward(policy, mu, cache, actions, weights)


def entropy_grad(policy: GaussianPolicy) -> list[np.ndarray]:
    """Gradient of :func:`entropy_of` in :meth:`GaussianPolicy.arrays` layout."""
    zeros = [np.zeros_like(a) for a in policy.mean_net.arrays()]
    return [*zeros, log_std_grad_mask(policy)]
