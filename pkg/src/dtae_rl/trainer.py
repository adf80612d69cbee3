"""Soft policy optimization with the dual-track advantage estimator.

One call to :func:`train_iteration` collects a batch with the current
policy, builds entropy-augmented rewards, estimates advantages from the
current value net (GAE) and the shadow value net (TDAE), refreshes the
shadow snapshots and then runs minibatch Adam on the clipped soft surrogate
and on the value regression loss.

:func:`ppo_iteration` is a separate, plain PPO loop (GAE only, no entropy
terms). With ``eta_0=0`` and ``estimator='gae'`` the two must agree bit for
bit.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .advantage import AdvantageConfig, TrajectoryValues, dual_track_advantage, gae, lambda_return, normalize
from .envs import ENVIRONMENTS, Env, make_env
from .exceptions import ConfigError, NumericError
from .gaussian_policy import (
    GaussianPolicy,
    ValueNet,
    entropy_of,
    gaussian_log_density,
    kl_divergence,
    log_prob_backward,
    log_std_grad_mask,
)
from .nn_core import AdamState, adam_init, adam_step, clip_grad_norm, mlp_backward, mlp_forward, save_arrays
from .rollout import Batch, augment_rewards, collect_batch, rewards_to_go

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    env: str = "PointMass"
    total_steps: int = 150_000
    steps_per_batch: int = 2048
    epochs_per_batch: int = 10
    minibatch_size: int = 64
    gamma: float = 0.99
    lam: float = 0.95
    alpha: float = 0.1
    combine: str = "mean"
    beta: float = 0.99
    estimator: str = "dtae"
    eta_0: float = 1e-3
    clip_eps_0: float = 0.2
    lr_0: float = 3e-4
    entropy_loss_coef: float = 1.0
    value_loss_coef: float = 0.5
    clip: bool = True
    normalize_advantages: bool = True
    entropy_state: str = "next"
    value_target: str = "rtg"
    max_grad_norm: float = 0.5
    hidden_units: int = 64
    hidden_layers: int = 2
    init_log_std: float = 0.0
    algorithm: str = "spod"
    seed: int = 0

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"env: unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        for name in ("steps_per_batch", "epochs_per_batch", "minibatch_size", "hidden_units", "hidden_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        for name in ("eta_0", "clip_eps_0", "lr_0", "entropy_loss_coef", "value_loss_coef"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.entropy_state not in ("next", "current"):
            raise ConfigError("entropy_state must be 'next' or 'current'")
        if self.value_target not in ("rtg", "lambda"):
            raise ConfigError("value_target must be 'rtg' or 'lambda'")
        if self.algorithm not in ("spod", "ppo"):
            raise ConfigError("algorithm must be 'spod' or 'ppo'")
        self.advantage_config()

    def advantage_config(self) -> AdvantageConfig:
        return AdvantageConfig(self.gamma, self.lam, self.alpha, self.combine, self.beta, self.estimator)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def linear_schedule(initial: float, progress: float) -> float:
    """``initial * (1 - progress)`` with ``progress`` clamped to [0, 1]."""
    progress = min(max(progress, 0.0), 1.0)
    return initial * (1.0 - progress)


@dataclass
class TrainState:
    config: TrainConfig
    env: Env
    policy: GaussianPolicy
    value: ValueNet
    shadow_policy: GaussianPolicy
    shadow_value: ValueNet
    policy_opt: AdamState
    value_opt: AdamState
    rng: np.random.Generator
    steps_done: int = 0
    iteration: int = 0
    diagnostic_dir: Path | None = None

    @classmethod
    def create(cls, config: TrainConfig, diagnostic_dir=None) -> "TrainState":
        rng = np.random.default_rng(config.seed)
        env = make_env(config.env)
        hidden = (config.hidden_units,) * config.hidden_layers
        policy = GaussianPolicy.init(rng, env.spec.state_dim, env.spec.action_dim, hidden, config.init_log_std)
        value = ValueNet.init(rng, env.spec.state_dim, hidden)
        return cls(
            config=config,
            env=env,
            policy=policy,
            value=value,
            shadow_policy=policy.copy(),
            shadow_value=value.copy(),
            policy_opt=adam_init(policy.arrays()),
            value_opt=adam_init(value.arrays()),
            rng=rng,
            diagnostic_dir=Path(diagnostic_dir) if diagnostic_dir else None,
        )

    @property
    def done(self) -> bool:
        return self.steps_done >= self.config.total_steps


@dataclass
class IterationMetrics:
    iteration: int
    step: int
    mean_return: float
    min_return: float
    max_return: float
    n_episodes: int
    policy_loss: float
    value_loss: float
    mean_entropy: float
    mean_kl: float
    clip_fraction: float
    lr: float
    clip_eps: float
    eta: float
    policy_grad_norm: float
    value_grad_norm: float
    skipped_minibatches: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def row(self) -> list:
        return [getattr(self, c) for c in self.columns()]


# --- losses ----------------------------------------------------------------


def compute_t_terms(advantages, new_entropy, old_entropies, eta: float, entropy_loss_coef: float = 1.0, mask=None):
    """``T_t = A_t + coef * eta * (H_new - H_old_t)``; ``mask`` zeroes the entropy term per sample."""
    adv = np.asarray(advantages, dtype=np.float64)
    diff = new_entropy - np.asarray(old_entropies, dtype=np.float64)
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    return adv + entropy_loss_coef * eta * diff


def clipped_surrogate_loss(
    policy: GaussianPolicy,
    states,
    actions,
    old_log_probs,
    advantages,
    old_entropies,
    eta: float,
    clip_eps: float,
    entropy_loss_coef: float = 1.0,
    entropy_mask=None,
    clip: bool = True,
):
    """Negative mean of ``min(r T, clip(r, 1-eps, 1+eps) T)`` and its gradient.

    The gradient flows through the ratio and through the entropy of the
    policy inside ``T``. Returns ``(loss, grads, info)``; ``grads`` follows
    :meth:`GaussianPolicy.arrays`.
    """
    n = len(advantages)
    mu, cache = mlp_forward(policy.mean_net, np.atleast_2d(states))
    logp = gaussian_log_density(np.atleast_2d(actions), mu, policy.clamped_log_std())
    with np.errstate(over="ignore"):
        ratio = np.exp(logp - old_log_probs)
    if not np.all(np.isfinite(ratio)):
        raise NumericError("non-finite probability ratio")
    T = compute_t_terms(advantages, entropy_of(policy), old_entropies, eta, entropy_loss_coef, entropy_mask)
    unclipped = ratio * T
    if clip:
        clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        clipped = clipped_ratio * T
        use_unclipped = unclipped <= clipped
        objective = np.where(use_unclipped, unclipped, clipped)
        d_T = np.where(use_unclipped, ratio, clipped_ratio)
        w_logp = np.where(use_unclipped, unclipped, 0.0)
        clip_fraction = float(np.mean(np.abs(ratio - 1.0) > clip_eps))
    else:
        objective = unclipped
        d_T = ratio
        w_logp = unclipped
        clip_fraction = 0.0
    loss = -float(np.mean(objective))
    grads = log_prob_backward(policy, mu, cache, actions, -w_logp / n)
    coef = d_T * (entropy_loss_coef * eta)
    if entropy_mask is not None:
        coef = np.where(entropy_mask, coef, 0.0)
    # d H / d log_std is 1 per unclamped dimension
    grads[-1] = grads[-1] + (-float(np.sum(coef)) / n) * log_std_grad_mask(policy)
    return loss, grads, {"clip_fraction": clip_fraction, "ratio": ratio, "T": T}


def value_regression_loss(value: ValueNet, states, targets, value_loss_coef: float = 0.5):
    """``coef * mean((V(s) - G)^2)`` and its gradient (``value.arrays()`` layout)."""
    out, cache = mlp_forward(value.net, np.atleast_2d(states))
    err = out[:, 0] - np.asarray(targets, dtype=np.float64)
    n = err.shape[0]
    loss = value_loss_coef * float(np.mean(err * err))
    grads = mlp_backward(value.net, cache, (2.0 * value_loss_coef / n) * err[:, None])
    return loss, grads.arrays()


# --- iteration -------------------------------------------------------------


def trajectory_values(value: ValueNet, states: np.ndarray, terminated: bool) -> np.ndarray:
    v = value(states)
    if terminated:
        v[-1] = 0.0
    return v


def _schedules(state: TrainState):
    cfg = state.config
    progress = state.steps_done / cfg.total_steps if cfg.total_steps else 1.0
    return (
        linear_schedule(cfg.lr_0, progress),
        linear_schedule(cfg.clip_eps_0, progress),
        linear_schedule(cfg.eta_0, progress),
    )


def _batch_size(state: TrainState) -> int:
    cfg = state.config
    return max(1, min(cfg.steps_per_batch, cfg.total_steps - state.steps_done))


def _returns_summary(batch: Batch):
    rets = batch.episode_returns()
    if not rets:
        return math.nan, math.nan, math.nan, 0
    return float(np.mean(rets)), float(np.min(rets)), float(np.max(rets)), len(rets)


def _diagnostic_checkpoint(state: TrainState, policy: GaussianPolicy, value: ValueNet) -> None:
    if state.diagnostic_dir is None:
        return
    state.diagnostic_dir.mkdir(parents=True, exist_ok=True)
    path = state.diagnostic_dir / f"diagnostic_seed{state.config.seed}_iter{state.iteration}.ckpt"
    save_checkpoint(path, policy, value, state.config.env)
    log.error("numeric failure; pre-iteration parameters written to %s", path)


def train_iteration(state: TrainState) -> IterationMetrics:
    """One SPOD iteration; mutates ``state`` and returns the iteration metrics."""
    theta_k, phi_k = state.policy.copy(), state.value.copy()
    try:
        return _spod_iteration(state)
    except NumericError:
        _diagnostic_checkpoint(state, theta_k, phi_k)
        raise


def _spod_iteration(state: TrainState) -> IterationMetrics:
    cfg = state.config
    lr, clip_eps, eta = _schedules(state)
    adv_cfg = cfg.advantage_config()

    batch = collect_batch(state.policy, state.env, _batch_size(state), state.rng)

    advs, targets, h_next, h_cur = [], [], [], []
    for traj in batch.trajectories:
        augment_rewards(traj, state.policy, eta)
        cur_v = trajectory_values(state.value, traj.states, traj.terminated)
        shadow_v = trajectory_values(state.shadow_value, traj.states, traj.terminated)
        advs.append(dual_track_advantage(traj.soft_rewards, cur_v, shadow_v, adv_cfg, traj.terminated))
        if cfg.value_target == "rtg":
            targets.append(rewards_to_go(traj, cfg.gamma, state.value))
        else:
            targets.append(lambda_return(TrajectoryValues(traj.soft_rewards, cur_v, traj.terminated), cfg.gamma, cfg.lam))
        h_next.append(traj.next_state_entropies)
        h_cur.append(np.full(len(traj), entropy_of(state.policy)))

    adv = np.concatenate(advs)
    if cfg.normalize_advantages:
        adv = normalize(adv)
    targets = np.concatenate(targets)
    if cfg.entropy_state == "next":
        old_entropies, entropy_mask = np.concatenate(h_next), ~batch.terminal_mask()
    else:
        old_entropies, entropy_mask = np.concatenate(h_cur), None

    # shadow refresh happens before optimization: theta~_{k+1} = theta_k, phi~_{k+1} = phi_k
    state.shadow_policy = state.policy.copy()
    state.shadow_value = state.value.copy()

    states, actions, old_logp = batch.states(), batch.concat("actions"), batch.concat("old_log_probs")
    stats = _optimize(
        state, states, actions, old_logp, adv, targets, lr,
        lambda idx: clipped_surrogate_loss(
            state.policy, states[idx], actions[idx], old_logp[idx], adv[idx], old_entropies[idx],
            eta, clip_eps, cfg.entropy_loss_coef,
            None if entropy_mask is None else entropy_mask[idx], cfg.clip,
        ),
    )
    return _finish(state, batch, stats, lr, clip_eps, eta)


def _optimize(state, states, actions, old_logp, adv, targets, lr, policy_loss_fn):
    cfg = state.config
    n = states.shape[0]
    p_losses, v_losses, clip_fracs = [], [], []
    p_norm = v_norm = 0.0
    skipped = 0
    for _ in range(cfg.epochs_per_batch):
        perm = state.rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            try:
                p_loss, p_grads, info = policy_loss_fn(idx)
            except NumericError as exc:
                skipped += 1
                log.warning("skipping minibatch: %s", exc)
                continue
            p_grads, norm = clip_grad_norm(p_grads, cfg.max_grad_norm)
            p_norm = max(p_norm, norm)
            adam_step(state.policy.arrays(), p_grads, state.policy_opt, lr)

            v_loss, v_grads = value_regression_loss(state.value, states[idx], targets[idx], cfg.value_loss_coef)
            v_grads, norm = clip_grad_norm(v_grads, cfg.max_grad_norm)
            v_norm = max(v_norm, norm)
            adam_step(state.value.arrays(), v_grads, state.value_opt, lr)

            p_losses.append(p_loss)
            v_losses.append(v_loss)
            clip_fracs.append(info["clip_fraction"])
    if not p_losses:
        raise NumericError("every minibatch of the iteration was skipped")
    for name, x in (("policy_loss", p_losses), ("value_loss", v_losses)):
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite {name}")
    return {
        "policy_loss": float(np.mean(p_losses)),
        "value_loss": float(np.mean(v_losses)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "policy_grad_norm": p_norm,
        "value_grad_norm": v_norm,
        "skipped": skipped,
    }


def _finish(state, batch, stats, lr, clip_eps, eta) -> IterationMetrics:
    states = batch.states()
    mean_kl = float(np.mean(kl_divergence(state.shadow_policy, state.policy, states)))
    state.steps_done += batch.n_steps
    state.iteration += 1
    mean_ret, min_ret, max_ret, n_eps = _returns_summary(batch)
    return IterationMetrics(
        iteration=state.iteration,
        step=state.steps_done,
        mean_return=mean_ret,
        min_return=min_ret,
        max_return=max_ret,
        n_episodes=n_eps,
        policy_loss=stats["policy_loss"],
        value_loss=stats["value_loss"],
        mean_entropy=entropy_of(state.policy),
        mean_kl=mean_kl,
        clip_fraction=stats["clip_fraction"],
        lr=lr,
        clip_eps=clip_eps,
        eta=eta,
        policy_grad_norm=stats["policy_grad_norm"],
        value_grad_norm=stats["value_grad_norm"],
        skipped_minibatches=stats["skipped"],
    )


def ppo_iteration(state: TrainState) -> IterationMetrics:
    """Reference PPO step: GAE advantages, raw rewards, standard clipped objective."""
    cfg = state.config
    lr, clip_eps, _ = _schedules(state)
    batch = collect_batch(state.policy, state.env, _batch_size(state), state.rng)
    advs, targets = [], []
    for traj in batch.trajectories:
        v = trajectory_values(state.value, traj.states, traj.terminated)
        advs.append(gae(TrajectoryValues(traj.raw_rewards, v, traj.terminated), cfg.gamma, cfg.lam))
        targets.append(rewards_to_go(traj, cfg.gamma, state.value))
    adv = np.concatenate(advs)
    if cfg.normalize_advantages:
        adv = normalize(adv)
    targets = np.concatenate(targets)
    state.shadow_policy = state.policy.copy()
    state.shadow_value = state.value.copy()
    states, actions, old_logp = batch.states(), batch.concat("actions"), batch.concat("old_log_probs")

    def ppo_loss(idx):
        a = adv[idx]
        mu, cache = mlp_forward(state.policy.mean_net, states[idx])
        logp = gaussian_log_density(actions[idx], mu, state.policy.clamped_log_std())
        with np.errstate(over="ignore"):
            ratio = np.exp(logp - old_logp[idx])
        if not np.all(np.isfinite(ratio)):
            raise NumericError("non-finite probability ratio")
        surr1 = ratio * a
        if cfg.clip:
            clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
            surr2 = clipped_ratio * a
            pick = surr1 <= surr2
            objective = np.where(pick, surr1, surr2)
            w = np.where(pick, surr1, 0.0)
            frac = float(np.mean(np.abs(ratio - 1.0) > clip_eps))
        else:
            objective, w, frac = surr1, surr1, 0.0
        grads = log_prob_backward(state.policy, mu, cache, actions[idx], -w / len(idx))
        return -float(np.mean(objective)), grads, {"clip_fraction": frac}

    stats = _optimize(state, states, actions, old_logp, adv, targets, lr, ppo_loss)
    return _finish(state, batch, stats, lr, clip_eps, 0.0)


def train(config: TrainConfig, callback=None, iteration_fn=None, diagnostic_dir=None):
    """Run iterations until ``config.total_steps``; returns ``(state, metrics)``.

    ``config.algorithm`` picks :func:`train_iteration` or :func:`ppo_iteration`
    unless ``iteration_fn`` is given.
    """
    if iteration_fn is None:
        iteration_fn = ppo_iteration if config.algorithm == "ppo" else train_iteration
    state = TrainState.create(config, diagnostic_dir)
    history = []
    while not state.done:
        m = iteration_fn(state)
        history.append(m)
        if callback is not None:
            callback(m)
    return state, history


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(path, policy: GaussianPolicy, value: ValueNet, env_name: str = "") -> None:
    named = {}
    for i, a in enumerate(policy.mean_net.arrays()):
        named[f"policy.{i}"] = a
    named["policy.log_std"] = policy.log_std
    for i, a in enumerate(value.arrays()):
        named[f"value.{i}"] = a
    save_arrays(path, named)
    if env_name:
        with open(path, "a") as fh:
            fh.write(f"# env={env_name}\n")


def load_checkpoint(path):
    """Returns ``(policy, value, env_name)``; ``env_name`` is '' when absent."""
    from .nn_core import MlpParams, load_arrays

    named = load_arrays(path)
    p_arrays = [named[f"policy.{i}"] for i in range(sum(k.startswith("policy.") and k[7:].isdigit() for k in named))]
    v_arrays = [named[f"value.{i}"] for i in range(sum(k.startswith("value.") for k in named))]
    env_name = ""
    for line in Path(path).read_text().splitlines():
        if line.startswith("# env="):
            env_name = line[6:].strip()
    policy = GaussianPolicy(MlpParams.from_arrays(p_arrays), named["policy.log_std"])
    return policy, ValueNet(MlpParams.from_arrays(v_arrays)), env_name
