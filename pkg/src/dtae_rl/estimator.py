"""scikit-learn style wrapper around the training loop.

    >>> agent = SPOD(env="PointMass", total_steps=20_000).fit()
    >>> actions = agent.predict(states)
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .envs import make_env
from .exceptions import ConfigError
from .rollout import greedy_returns
from .trainer import TrainConfig, train


def check_states(X, state_dim: int) -> np.ndarray:
    """2-D float64 array of finite states with ``state_dim`` columns (1-D input is one state)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != state_dim:
        raise ConfigError(f"expected states with {state_dim} features, got {X.shape[1]}")
    return X


class SPOD(BaseEstimator):
    """On-policy agent; hyperparameters are the :class:`TrainConfig` fields.

    ``algorithm="ppo"`` switches to the plain clipped-ratio update.
    Fitted attributes: ``policy_``, ``value_``, ``history_``, ``n_steps_``.
    """

    def __init__(
        self,
        env="PointMass",
        total_steps=150_000,
        steps_per_batch=2048,
        epochs_per_batch=10,
        minibatch_size=64,
        gamma=0.99,
        lam=0.95,
        alpha=0.1,
        combine="mean",
        beta=0.99,
        estimator="dtae",
        eta_0=1e-3,
        clip_eps_0=0.2,
        lr_0=3e-4,
        entropy_loss_coef=1.0,
        value_loss_coef=0.5,
        clip=True,
        normalize_advantages=True,
        entropy_state="next",
        value_target="rtg",
        max_grad_norm=0.5,
        hidden_units=64,
        hidden_layers=2,
        init_log_std=0.0,
        algorithm="spod",
        seed=0,
    ):
        self.env = env
        self.total_steps = total_steps
        self.steps_per_batch = steps_per_batch
        self.epochs_per_batch = epochs_per_batch
        self.minibatch_size = minibatch_size
        self.gamma = gamma
        self.lam = lam
        self.alpha = alpha
        self.combine = combine
        self.beta = beta
        self.estimator = estimator
        self.eta_0 = eta_0
        self.clip_eps_0 = clip_eps_0
        self.lr_0 = lr_0
        self.entropy_loss_coef = entropy_loss_coef
        self.value_loss_coef = value_loss_coef
        self.clip = clip
        self.normalize_advantages = normalize_advantages
        self.entropy_state = entropy_state
        self.value_target = value_target
        self.max_grad_norm = max_grad_norm
        self.hidden_units = hidden_units
        self.hidden_layers = hidden_layers
        self.init_log_std = init_log_std
        self.algorithm = algorithm
        self.seed = seed

    def to_config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    @classmethod
    def from_config(cls, config: TrainConfig) -> "SPOD":
        return cls(**dataclasses.asdict(config))

    def fit(self, X=None, y=None, callback=None):
        """Train on environment ``X`` (a name; defaults to ``self.env``). ``y`` is ignored."""
        config = self.to_config()
        if X is not None:
            config = config.replace(env=str(X))
        state, history = train(config, callback=callback)
        self.policy_ = state.policy
        self.value_ = state.value
        self.history_ = history
        self.n_steps_ = state.steps_done
        self.env_ = config.env
        return self

    def predict(self, X) -> np.ndarray:
        """Greedy (mean) actions for a batch of states."""
        check_is_fitted(self, "policy_")
        return self.policy_.mean(check_states(X, self.policy_.state_dim))

    def predict_value(self, X) -> np.ndarray:
        check_is_fitted(self, "value_")
        return self.value_(check_states(X, self.policy_.state_dim))

    def score(self, X=None, y=None, episodes: int = 10) -> float:
        """Mean undiscounted greedy return over ``episodes`` evaluation episodes."""
        check_is_fitted(self, "policy_")
        env = make_env(self.env_ if X is None else str(X))
        return float(greedy_returns(self.policy_, env, episodes, seed=10_000 + int(self.seed)).mean())
