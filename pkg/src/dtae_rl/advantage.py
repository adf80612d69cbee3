"""TD errors, lambda-returns, GAE, TDAE and the dual-track combination.

All estimators work on one finite episode. Sums that would run to
infinity stop at the episode end; the value of the last state carries
the bootstrap (it is forced to zero for a true terminal).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

COMBINE_MODES = ("mean", "max", "min", "beta")
ESTIMATORS = ("dtae", "gae", "tdae")


@dataclass
class TrajectoryValues:
    """Rewards ``r_1..r_T`` and values ``V(s_0)..V(s_T)`` of a single episode."""

    rewards: np.ndarray
    values: np.ndarray
    terminal: bool = False

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        self.values = np.array(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape[0] != self.rewards.shape[0] + 1:
            raise ConfigError(
                f"need len(values) == len(rewards) + 1, got {self.values.shape[0]} and {self.rewards.shape[0]}"
            )
        if self.terminal:
            self.values[-1] = 0.0

    def __len__(self) -> int:
        return self.rewards.shape[0]


@dataclass
class AdvantageConfig:
    gamma: float = 0.99
    lam: float = 0.95
    alpha: float = 0.1
    combine: str = "mean"
    beta: float | None = None
    estimator: str = "dtae"

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.combine not in COMBINE_MODES:
            raise ConfigError(f"combine must be one of {COMBINE_MODES}, got {self.combine!r}")
        if self.combine == "beta" and self.beta is None:
            raise ConfigError("combine='beta' requires beta")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.lam == 0.0 and self.alpha > 0.0 and self.estimator != "gae":
            raise ConfigError("TDAE is undefined for lambda = 0 with alpha > 0")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")


def td_errors(tv: TrajectoryValues, gamma: float) -> np.ndarray:
    v = tv.values
    return tv.rewards + gamma * v[1:] - v[:-1]


def discounted_backward(x: np.ndarray, factor: float) -> np.ndarray:
    """``y_t = sum_{k>=0} factor^k x_{t+k}`` via ``y_t = x_t + factor * y_{t+1}``."""
    out = np.empty_like(x, dtype=np.float64)
    acc = 0.0
    for t in range(x.shape[0] - 1, -1, -1):
        acc = x[t] + factor * acc
        out[t] = acc
    return out


def gae(tv: TrajectoryValues, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimate; ``lam=0`` gives the one-step TD error."""
    return discounted_backward(td_errors(tv, gamma), gamma * lam)


def lambda_return(tv: TrajectoryValues, gamma: float, lam: float) -> np.ndarray:
    return tv.values[:-1] + gae(tv, gamma, lam)


def tdae(tv: TrajectoryValues, gamma: float, lam: float, alpha: float) -> np.ndarray:
    """Advantage after a TD(lambda) value update with step ``alpha``.

    ``(1 - alpha) d_t + alpha * gamma * (1 - lam) * sum_k (gamma lam)^k d_{t+k+1}``,
    the 1/lambda-free rearrangement of ``alpha (1/lam - 1) sum (gamma lam)^{k+1} d``.
    """
    if lam <= 0.0 and alpha > 0.0:
        raise ConfigError("TDAE is undefined for lambda = 0 with alpha > 0")
    delta = td_errors(tv, gamma)
    tail = np.zeros_like(delta)
    if delta.shape[0] > 1:
        tail[:-1] = discounted_backward(delta[1:], gamma * lam)
    return (1.0 - alpha) * delta + alpha * gamma * (1.0 - lam) * tail


def dtae_combine(a_gae, a_tdae, mode: str = "mean", beta: float | None = None) -> np.ndarray:
    a_gae = np.asarray(a_gae, dtype=np.float64)
    a_tdae = np.asarray(a_tdae, dtype=np.float64)
    if a_gae.shape != a_tdae.shape:
        raise ConfigError(f"length mismatch: {a_gae.shape} vs {a_tdae.shape}")
    if mode == "mean":
        return 0.5 * (a_gae + a_tdae)
    if mode == "max":
        return np.maximum(a_gae, a_tdae)
    if mode == "min":
        return np.minimum(a_gae, a_tdae)
    if mode == "beta":
        if beta is None:
            raise ConfigError("mode 'beta' needs a beta weight")
        return beta * a_gae + (1.0 - beta) * a_tdae
    raise ConfigError(f"unknown combine mode {mode!r}")


def dual_track_advantage(
    rewards, current_values, shadow_values, cfg: AdvantageConfig, terminal: bool = False
) -> np.ndarray:
    """GAE on the current value track, TDAE on the shadow track, then combine.

    Both value sequences must be evaluated on the same trajectory.
    ``cfg.estimator`` can force a single track ('gae' or 'tdae').
    """
    current = TrajectoryValues(rewards, current_values, terminal)
    if cfg.estimator == "gae":
        return gae(current, cfg.gamma, cfg.lam)
    shadow = TrajectoryValues(rewards, shadow_values, terminal)
    a_td = tdae(shadow, cfg.gamma, cfg.lam, cfg.alpha)
    if cfg.estimator == "tdae":
        return a_td
    return dtae_combine(gae(current, cfg.gamma, cfg.lam), a_td, cfg.combine, cfg.beta)


def normalize(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Zero-mean, unit-std rescaling of a batch of advantages."""
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    return (adv - adv.mean()) / (adv.std() + eps)


# --- trajectory text format ------------------------------------------------
# Header lines start with '#'. One row per time step:
#   t  s_1..s_n  a_1..a_m  reward  done
# The final row carries s_T with 'nan' action/reward fields.
# done: 0 = running, 1 = terminated, 2 = truncated (set on the final row).

DONE_RUNNING, DONE_TERMINATED, DONE_TRUNCATED = 0, 1, 2


def dump_trajectory(path, states, actions, rewards, terminated: bool) -> None:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    rewards = np.asarray(rewards, dtype=np.float64)
    T = rewards.shape[0]
    if states.shape[0] != T + 1 or actions.shape[0] != T:
        raise ConfigError("trajectory arrays are not length-consistent")
    n, m = states.shape[1], actions.shape[1]
    lines = [f"# state_dim={n} action_dim={m} steps={T}", "# t state... action... reward done"]
    for t in range(T):
        row = [str(t), *map(repr, states[t].tolist()), *map(repr, actions[t].tolist()), repr(float(rewards[t])), "0"]
        lines.append(" ".join(row))
    flag = DONE_TERMINATED if terminated else DONE_TRUNCATED
    lines.append(" ".join([str(T), *map(repr, states[T].tolist()), *(["nan"] * (m + 1)), str(flag)]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path) -> dict:
    """Inverse of :func:`dump_trajectory`; returns states, actions, rewards, terminated."""
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# state_dim"):
            header = dict(kv.split("=") for kv in line[2:].split())
        elif line and not line.startswith("#"):
            rows.append(line.split())
    n, m = int(header["state_dim"]), int(header["action_dim"])
    data = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    return {
        "states": data[:, 1 : 1 + n],
        "actions": data[:-1, 1 + n : 1 + n + m],
        "rewards": data[:-1, 1 + n + m],
        "terminated": int(data[-1, -1]) == DONE_TERMINATED,
    }
