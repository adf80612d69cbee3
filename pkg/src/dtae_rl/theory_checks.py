"""Numerical checks of the soft performance-difference identity and the
Gaussian entropy / divergence inequalities behind the policy bound."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .envs import (
    TabularMDP,
    check_policy,
    discrete_entropy,
    evaluate_policy,
    exact_policy_return,
    policy_transition,
    random_mdp,
    random_policy,
    soft_reward,
)
from .gaussian_policy import gaussian_kl

LEGENDRE_NODES, LEGENDRE_WEIGHTS = np.polynomial.legendre.leggauss(32)


@dataclass
class CheckReport:
    name: str
    instances: int
    max_violation: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return (
            f"{status} {self.name}: instances={self.instances} "
            f"max_violation={self.max_violation:.3e} tolerance={self.tolerance:.1e}{extra}"
        )


# --- performance difference ------------------------------------------------


def auto_horizon(mdp: TabularMDP, pi, pi_hat, eta: float, tol: float) -> int:
    """Smallest horizon with ``gamma^H * max|r^H| / (1 - gamma) < tol / 10``."""
    r_max = max(
        np.max(np.abs(soft_reward(mdp, pi, eta))),
        np.max(np.abs(soft_reward(mdp, pi_hat, eta))),
        1e-300,
    )
    g = mdp.gamma
    return max(1, math.ceil(math.log(tol / 10.0 * (1.0 - g) / r_max) / math.log(g)))


def soft_t_table(mdp: TabularMDP, pi, pi_hat, eta: float) -> np.ndarray:
    """``T_pi(s, a) = A^H_pi(s, a) + eta * E_{s'}[H(pi_hat(s')) - H(pi(s'))]``."""
    V, Q = evaluate_policy(mdp, pi, eta)
    dH = discrete_entropy(pi_hat) - discrete_entropy(pi)
    return (Q - V[:, None]) + eta * (mdp.transition @ dH)


def performance_difference_terms(mdp: TabularMDP, pi, pi_hat, eta: float, horizon: int | None = None):
    """``(J(pi_hat) - J(pi), E_{tau|pi_hat} sum_t gamma^t T_pi(s_t, a_t))``.

    ``horizon=None`` evaluates both sides as exact infinite sums; an integer
    truncates both after that many steps.
    """
    pi = check_policy(mdp, pi)
    pi_hat = check_policy(mdp, pi_hat)
    T = soft_t_table(mdp, pi, pi_hat, eta)
    t_hat = (pi_hat * T).sum(-1)
    P_hat = policy_transition(mdp, pi_hat)
    if horizon is None:
        occupancy = np.linalg.solve((np.eye(mdp.n_states) - mdp.gamma * P_hat).T, mdp.initial_dist)
        rhs = float(occupancy @ t_hat)
    else:
        d = mdp.initial_dist.copy()
        rhs, disc = 0.0, 1.0
        for _ in range(horizon):
            rhs += disc * float(d @ t_hat)
            d = d @ P_hat
            disc *= mdp.gamma
    lhs = exact_policy_return(mdp, pi_hat, horizon, eta) - exact_policy_return(mdp, pi, horizon, eta)
    return lhs, rhs


def verify_theorem1(mdp: TabularMDP, pi, pi_hat, eta: float, horizon: int | None = None, tol: float = 1e-8) -> CheckReport:
    """Compare both sides of the soft performance-difference identity on one MDP.

    ``horizon=None`` picks the truncation from the reward bound so the
    neglected tail is below ``tol / 10``.
    """
    if horizon is None:
        horizon = auto_horizon(mdp, pi, pi_hat, eta, tol)
    lhs, rhs = performance_difference_terms(mdp, pi, pi_hat, eta, horizon)
    return CheckReport("performance_difference", 1, abs(lhs - rhs), tol, f"horizon={horizon} lhs={lhs:.12g} rhs={rhs:.12g}")


def performance_difference_suite(
    n_mdps: int = 50, etas=(0.0, 0.1), seed: int = 0, max_states: int = 6, max_actions: int = 3,
    gamma: float = 0.9, tol: float = 1e-8,
) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst, count = 0.0, 0
    for _ in range(n_mdps):
        S = int(rng.integers(2, max_states + 1))
        A = int(rng.integers(2, max_actions + 1))
        mdp = random_mdp(rng, S, A, gamma)
        pi, pi_hat = random_policy(rng, S, A), random_policy(rng, S, A)
        for eta in etas:
            worst = max(worst, verify_theorem1(mdp, pi, pi_hat, eta, tol=tol).max_violation)
            count += 1
    return CheckReport("performance_difference_suite", count, worst, tol, f"etas={list(etas)} gamma={gamma}")


# --- entropy difference bound ----------------------------------------------


def entropy_difference(sigma, sigma_hat):
    """``H(N(., sigma_hat)) - H(N(., sigma))`` in nats."""
    return np.log(sigma_hat) - np.log(sigma)


def entropy_bound_boundary(delta: float) -> tuple[float, float]:
    """Pair at the relaxed constraint ``log(sigma_hat/sigma) - 1/2 = delta``.

    Dropping the non-negative quadratic term from the KL leaves exactly this
    constraint, so the entropy-difference bound is attained here. Returns
    ``(difference, bound)``.
    """
    sigma = 1.3
    sigma_hat = sigma * math.exp(delta + 0.5)
    return float(entropy_difference(sigma, sigma_hat)), delta + 0.5


def entropy_bound_candidates(rng: np.random.Generator, n: int):
    """Random 1-D Gaussian pairs ``(mu, sigma, mu_hat, sigma_hat)`` clustered near each other."""
    mu = rng.uniform(-2.0, 2.0, n)
    sigma = np.exp(rng.uniform(math.log(0.1), math.log(5.0), n))
    mu_hat = mu + sigma * rng.uniform(-0.5, 0.5, n)
    sigma_hat = sigma * np.exp(rng.uniform(-0.5, 0.5, n))
    return mu, sigma, mu_hat, sigma_hat


def entropy_bound_max_difference(candidates, delta: float) -> tuple[float, int]:
    """Largest entropy difference among candidates with KL(pi || pi_hat) <= delta."""
    mu, sigma, mu_hat, sigma_hat = candidates
    kl = gaussian_kl(mu[:, None], np.log(sigma)[:, None], mu_hat[:, None], np.log(sigma_hat)[:, None])
    ok = kl <= delta
    if not np.any(ok):
        return -math.inf, 0
    return float(np.max(entropy_difference(sigma[ok], sigma_hat[ok]))), int(ok.sum())


def verify_lemma1(n_pairs: int = 10_000, delta: float = 0.01, seed: int = 0, boundary_tol: float = 1e-9) -> CheckReport:
    rng = np.random.default_rng(seed)
    bound = delta + 0.5
    accepted, worst = 0, -math.inf
    while accepted < n_pairs:
        cand = entropy_bound_candidates(rng, 4 * n_pairs)
        mu, sigma, mu_hat, sigma_hat = cand
        kl = gaussian_kl(mu[:, None], np.log(sigma)[:, None], mu_hat[:, None], np.log(sigma_hat)[:, None])
        ok = np.flatnonzero(kl <= delta)[: n_pairs - accepted]
        diffs = entropy_difference(sigma[ok], sigma_hat[ok])
        if ok.size:
            worst = max(worst, float(np.max(diffs - bound)))
        accepted += ok.size
    diff, b = entropy_bound_boundary(delta)
    boundary_gap = abs(diff - b)
    violation = max(worst, 0.0)
    # a boundary miss is reported as a violation larger than any tolerance
    if boundary_gap > boundary_tol:
        violation = max(violation, math.inf)
    return CheckReport(
        f"entropy_bound(delta={delta})", accepted, violation, 0.0,
        f"max(H_hat-H)-bound={worst:.3e} boundary_gap={boundary_gap:.1e}",
    )


# --- total variation vs KL -------------------------------------------------


def _crossings(mu1, s1, mu2, s2):
    a = 0.5 / s2**2 - 0.5 / s1**2
    b = mu1 / s1**2 - mu2 / s2**2
    c = 0.5 * mu2**2 / s2**2 - 0.5 * mu1**2 / s1**2 + math.log(s2 / s1)
    if abs(a) < 1e-14:
        return [-c / b] if abs(b) > 1e-14 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return [(-b - r) / (2 * a), (-b + r) / (2 * a)]


def _normal_pdf(x, mu, s):
    z = (x - mu) / s
    return np.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))


def tv_quadrature(mu1: float, s1: float, mu2: float, s2: float, width: float = 12.0):
    """Total variation ``1/2 int |p - q|`` by piecewise Gauss-Legendre.

    Breakpoints sit at the density crossings and at every integer multiple
    of each standard deviation, so ``|p - q|`` is smooth on each piece.
    Returns ``(tv, mass_error)`` where ``mass_error`` is the worst deviation
    of the integrated densities from 1.
    """
    ks = np.arange(-width, width + 1.0)
    pts = np.concatenate([mu1 + s1 * ks, mu2 + s2 * ks, _crossings(mu1, s1, mu2, s2)])
    pts = np.unique(pts)
    lo, hi = pts[:-1], pts[1:]
    half = 0.5 * (hi - lo)[:, None]
    x = 0.5 * (hi + lo)[:, None] + half * LEGENDRE_NODES[None, :]
    w = half * LEGENDRE_WEIGHTS[None, :]
    p = _normal_pdf(x, mu1, s1)
    q = _normal_pdf(x, mu2, s2)
    tv = 0.5 * float(np.sum(w * np.abs(p - q)))
    mass_error = max(abs(float(np.sum(w * p)) - 1.0), abs(float(np.sum(w * q)) - 1.0))
    return tv, mass_error


def verify_tv_kl(n_pairs: int = 10_000, seed: int = 0, tol: float = 1e-9, mass_tol: float = 1e-9) -> CheckReport:
    rng = np.random.default_rng(seed)
    mu1 = rng.uniform(-3.0, 3.0, n_pairs)
    mu2 = rng.uniform(-3.0, 3.0, n_pairs)
    s1 = np.exp(rng.uniform(math.log(0.1), math.log(5.0), n_pairs))
    s2 = np.exp(rng.uniform(math.log(0.1), math.log(5.0), n_pairs))
    kl = gaussian_kl(mu1[:, None], np.log(s1)[:, None], mu2[:, None], np.log(s2)[:, None])
    worst, worst_mass = -math.inf, 0.0
    for i in range(n_pairs):
        tv, mass_err = tv_quadrature(mu1[i], s1[i], mu2[i], s2[i])
        worst_mass = max(worst_mass, mass_err)
        worst = max(worst, tv * tv - kl[i])
    if worst_mass > mass_tol:
        warnings.warn(f"quadrature mass error {worst_mass:.1e} exceeds {mass_tol:.0e}; widening tolerance")
        tol = tol + 2.0 * worst_mass
    return CheckReport("tv_squared_le_kl", n_pairs, max(worst, 0.0), tol, f"mass_error={worst_mass:.1e}")


def run_all_checks(seed: int = 0) -> list[CheckReport]:
    reports = [performance_difference_suite(seed=seed)]
    reports += [verify_lemma1(delta=d, seed=seed) for d in (0.01, 0.1)]
    reports.append(verify_tv_kl(seed=seed))
    return reports
