"""Desk-scale continuous-control environments and an exact tabular MDP.

Dynamics constants (all SI-free, chosen to be hand-checkable):

PointMass
    state (px, py, vx, vy); action = acceleration in [-1, 1]^2; dt = 0.05.
    v' = v + dt * a, p' = p + dt * v' (so p' = p + dt * (v + dt * a)).
    Positions are confined to [-2, 2]^2; hitting a wall zeroes that velocity
    component. reward = -(|p|^2 + 0.01 |a|^2), evaluated at the pre-step
    position, so it lies in [-8.02, 0]. Reset: p ~ U[-1, 1]^2, v = 0.
    Horizon 200, never terminates.

PendulumSwingup
    state (cos th, sin th, thdot); th = 0 is upright. g = 10, m = 1, l = 1,
    dt = 0.05, torque in [-2, 2], |thdot| <= 8.
    thdot' = thdot + (3 g / (2 l) sin th + 3 / (m l^2) u) dt, th' = th + thdot' dt.
    reward = -(th^2 + 0.1 thdot^2 + 0.001 u^2) with th wrapped to [-pi, pi].
    Reset: th ~ U[-pi, pi], thdot ~ U[-1, 1]. Horizon 200.

CartPoleContinuous
    state (x, xdot, th, thdot); force in [-10, 10]; g = 9.8, cart mass 1.0,
    pole mass 0.1, half-length 0.5, tau = 0.02, explicit Euler. +1 per step;
    terminates when |th| > 12 deg or |x| > 2.4. Reset: each component
    ~ U[-0.05, 0.05]. Horizon 500.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, UsageError


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: tuple
    action_high: tuple
    max_episode_steps: int

    def __post_init__(self):
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ConfigError("action bounds do not match action_dim")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ConfigError("action bounds need low < high")
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps must be >= 1")


class Env:
    """Base class: seeded reset, bounded actions, time-limit truncation."""

    name = "env"
    spec: EnvSpec

    def __init__(self, max_episode_steps: int | None = None):
        if max_episode_steps is not None:
            s = self.spec
            self.spec = EnvSpec(s.state_dim, s.action_dim, s.action_low, s.action_high, max_episode_steps)
        self._low = np.asarray(self.spec.action_low, dtype=np.float64)
        self._high = np.asarray(self.spec.action_high, dtype=np.float64)
        self.clip_count = 0
        self.steps = 0
        self._done = True
        self._state = None

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.steps = 0
        self._done = False
        self._state = self._initial_state(rng)
        return self.observe()

    def step(self, action):
        if self._done:
            raise UsageError(f"{self.name}: step() called on a finished episode; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        clipped = np.minimum(np.maximum(action, self._low), self._high)
        if (clipped != action).any():
            self.clip_count += 1
        reward, terminated = self._advance(clipped)
        self.steps += 1
        truncated = (not terminated) and self.steps >= self.spec.max_episode_steps
        self._done = terminated or truncated
        return self.observe(), float(reward), bool(terminated), bool(truncated)

    def observe(self) -> np.ndarray:
        return np.array(self._state, dtype=np.float64)

    def _initial_state(self, rng):
        raise NotImplementedError

    def _advance(self, action):
        raise NotImplementedError


class PointMass(Env):
    name = "PointMass"
    spec = EnvSpec(4, 2, (-1.0, -1.0), (1.0, 1.0), 200)
    dt = 0.05
    bound = 2.0
    action_cost = 0.01

    def _initial_state(self, rng):
        return np.concatenate([rng.uniform(-1.0, 1.0, 2), np.zeros(2)])

    def _advance(self, a):
        p, v = self._state[:2], self._state[2:]
        reward = -(float(p @ p) + self.action_cost * float(a @ a))
        v = v + self.dt * a
        p = p + self.dt * v
        hit = np.abs(p) > self.bound
        p = np.clip(p, -self.bound, self.bound)
        v = np.where(hit, 0.0, v)
        self._state = np.concatenate([p, v])
        return reward, False


class PendulumSwingup(Env):
    name = "PendulumSwingup"
    spec = EnvSpec(3, 1, (-2.0,), (2.0,), 200)
    g, m, length, dt, max_speed = 10.0, 1.0, 1.0, 0.05, 8.0

    def _initial_state(self, rng):
        return np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)])

    def observe(self):
        th, thdot = self._state
        return np.array([math.cos(th), math.sin(th), thdot])

    def _advance(self, a):
        th, thdot = self._state
        u = float(a[0])
        wrapped = ((th + np.pi) % (2.0 * np.pi)) - np.pi
        reward = -(wrapped**2 + 0.1 * thdot**2 + 0.001 * u**2)
        thdot = thdot + (3.0 * self.g / (2.0 * self.length) * math.sin(th)
                         + 3.0 / (self.m * self.length**2) * u) * self.dt
        thdot = min(max(thdot, -self.max_speed), self.max_speed)
        th = th + thdot * self.dt
        self._state = np.array([th, thdot])
        return reward, False


class CartPoleContinuous(Env):
    name = "CartPoleContinuous"
    spec = EnvSpec(4, 1, (-10.0,), (10.0,), 500)
    gravity, masscart, masspole, half_length, tau = 9.8, 1.0, 0.1, 0.5, 0.02
    theta_limit = 12.0 * 2.0 * math.pi / 360.0
    x_limit = 2.4

    def _initial_state(self, rng):
        return rng.uniform(-0.05, 0.05, 4)

    def _advance(self, a):
        x, x_dot, th, th_dot = self._state
        force = float(a[0])
        total_mass = self.masscart + self.masspole
        polemass_length = self.masspole * self.half_length
        cos, sin = math.cos(th), math.sin(th)
        temp = (force + polemass_length * th_dot**2 * sin) / total_mass
        th_acc = (self.gravity * sin - cos * temp) / (
            self.half_length * (4.0 / 3.0 - self.masspole * cos**2 / total_mass)
        )
        x_acc = temp - polemass_length * th_acc * cos / total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * x_acc
        th = th + self.tau * th_dot
        th_dot = th_dot + self.tau * th_acc
        self._state = np.array([x, x_dot, th, th_dot])
        terminated = abs(x) > self.x_limit or abs(th) > self.theta_limit
        return 1.0, terminated


ENVIRONMENTS = {cls.name: cls for cls in (PointMass, PendulumSwingup, CartPoleContinuous)}


def make_env(name: str, max_episode_steps: int | None = None) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(max_episode_steps)


def env_reset(env: Env, seed: int) -> np.ndarray:
    return env.reset(seed)


def env_step(env: Env, action):
    return env.step(action)


# --- exact tabular MDP -----------------------------------------------------


@dataclass
class TabularMDP:
    """Finite MDP: ``transition[s, a, s']``, ``reward[s, a]``, discount and start distribution."""

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)
        S, A = self.reward.shape
        if self.transition.shape != (S, A, S):
            raise ConfigError(f"transition shape {self.transition.shape} != {(S, A, S)}")
        if np.any(self.transition < 0) or np.max(np.abs(self.transition.sum(-1) - 1.0)) > 1e-12:
            raise ConfigError("each transition row must be a probability distribution")
        if self.initial_dist.shape != (S,) or abs(self.initial_dist.sum() - 1.0) > 1e-12:
            raise ConfigError("initial distribution must sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("tabular discount must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float = 0.9) -> TabularMDP:
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # renormalize so rows sum to one to the last ulp
    P /= P.sum(-1, keepdims=True)
    R = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    rho /= rho.sum()
    return TabularMDP(P, R, gamma, rho)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    pi = rng.dirichlet(np.ones(n_actions), size=n_states)
    return pi / pi.sum(-1, keepdims=True)


def check_policy(mdp: TabularMDP, policy) -> np.ndarray:
    pi = np.asarray(policy, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError(f"policy shape {pi.shape} != {(mdp.n_states, mdp.n_actions)}")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(-1) - 1.0)) > 1e-10:
        raise ConfigError("policy rows must be probability distributions")
    return pi


def discrete_entropy(policy) -> np.ndarray:
    """Per-state Shannon entropy ``-sum_a pi log pi`` in nats (0 log 0 = 0)."""
    pi = np.asarray(policy, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pi > 0, pi * np.log(pi), 0.0)
    return -terms.sum(-1)


def soft_reward(mdp: TabularMDP, policy, eta: float, entropy_at: str = "next") -> np.ndarray:
    """Entropy-augmented reward table ``r^H[s, a]``.

    ``entropy_at='next'`` adds ``eta * E_{s'} H(pi(s'))``; ``'current'`` adds
    ``eta * H(pi(s))`` instead.
    """
    H = discrete_entropy(policy)
    if entropy_at == "next":
        return mdp.reward + eta * (mdp.transition @ H)
    if entropy_at == "current":
        return mdp.reward + eta * H[:, None]
    raise ConfigError(f"entropy_at must be 'next' or 'current', got {entropy_at!r}")


def policy_transition(mdp: TabularMDP, policy) -> np.ndarray:
    """State-to-state kernel ``P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)``."""
    return np.einsum("sa,sat->st", policy, mdp.transition)


def evaluate_policy(mdp: TabularMDP, policy, eta: float = 0.0, entropy_at: str = "next"):
    """Exact soft ``(V, Q)`` by solving the linear Bellman system."""
    pi = check_policy(mdp, policy)
    r = soft_reward(mdp, pi, eta, entropy_at)
    r_pi = (pi * r).sum(-1)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * policy_transition(mdp, pi), r_pi)
    Q = r + mdp.gamma * mdp.transition @ V
    return V, Q


def exact_policy_return(
    mdp: TabularMDP, policy, horizon: int | None = None, eta: float = 0.0, entropy_at: str = "next"
) -> float:
    """``J(pi) = E_{s0~rho} sum_t gamma^t r^H(s_t, a_t)``.

    ``horizon=None`` solves the infinite-horizon problem exactly; an integer
    sums the first ``horizon`` discounted steps by forward propagation of
    the state distribution.
    """
    pi = check_policy(mdp, policy)
    if horizon is None:
        V, _ = evaluate_policy(mdp, pi, eta, entropy_at)
        return float(mdp.initial_dist @ V)
    r_pi = (pi * soft_reward(mdp, pi, eta, entropy_at)).sum(-1)
    P_pi = policy_transition(mdp, pi)
    d = mdp.initial_dist.copy()
    total, disc = 0.0, 1.0
    for _ in range(horizon):
        total += disc * float(d @ r_pi)
        d = d @ P_pi
        disc *= mdp.gamma
    return total


def value_iteration(mdp: TabularMDP, tol: float = 1e-13, max_iter: int = 100_000):
    """Optimal ``(V*, greedy deterministic policy)`` for the unaugmented reward."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = mdp.reward + mdp.gamma * mdp.transition @ V
        V_new = Q.max(-1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = mdp.reward + mdp.gamma * mdp.transition @ V
    greedy = np.zeros((mdp.n_states, mdp.n_actions))
    greedy[np.arange(mdp.n_states), Q.argmax(-1)] = 1.0
    return V, greedy
