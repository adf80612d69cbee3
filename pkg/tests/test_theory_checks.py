import math

import numpy as np
import pytest
from scipy import integrate, stats

from dtae_rl.envs import discrete_entropy, evaluate_policy, random_mdp, random_policy, soft_reward
from dtae_rl.gaussian_policy import gaussian_kl
from dtae_rl.theory_checks import (
    CheckReport,
    auto_horizon,
    entropy_difference,
    entropy_bound_boundary,
    entropy_bound_candidates,
    entropy_bound_max_difference,
    performance_difference_terms,
    soft_t_table,
    performance_difference_suite,
    tv_quadrature,
    verify_lemma1,
    verify_theorem1,
    verify_tv_kl,
)


def test_identity_exact_infinite_horizon(rng):
    for _ in range(20):
        S, A = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        mdp = random_mdp(rng, S, A, 0.9)
        pi, pi_hat = random_policy(rng, S, A), random_policy(rng, S, A)
        for eta in (0.0, 0.1, 1.0):
            lhs, rhs = performance_difference_terms(mdp, pi, pi_hat, eta)
            assert abs(lhs - rhs) < 1e-12


def test_identity_same_policy_is_zero(rng):
    mdp = random_mdp(rng, 4, 2)
    pi = random_policy(rng, 4, 2)
    lhs, rhs = performance_difference_terms(mdp, pi, pi, 0.1)
    assert lhs == 0.0 and abs(rhs) < 1e-12
    # advantages average to zero under their own policy
    V, Q = evaluate_policy(mdp, pi, 0.1)
    np.testing.assert_allclose((pi * (Q - V[:, None])).sum(-1), 0.0, atol=1e-12)


def test_entropy_term_is_needed(rng):
    """Dropping the entropy difference from T breaks the identity when eta > 0."""
    mdp = random_mdp(rng, 5, 3)
    pi, pi_hat = random_policy(rng, 5, 3), random_policy(rng, 5, 3)
    T = soft_t_table(mdp, pi, pi_hat, 0.5)
    dH = discrete_entropy(pi_hat) - discrete_entropy(pi)
    T_without = T - 0.5 * (mdp.transition @ dH)
    lhs, rhs = performance_difference_terms(mdp, pi, pi_hat, 0.5)
    P_hat = np.einsum("sa,sat->st", pi_hat, mdp.transition)
    occ = np.linalg.solve((np.eye(5) - 0.9 * P_hat).T, mdp.initial_dist)
    rhs_without = float(occ @ (pi_hat * T_without).sum(-1))
    assert abs(lhs - rhs) < 1e-12 and abs(lhs - rhs_without) > 1e-3


def test_truncated_check_and_horizon(rng):
    mdp = random_mdp(rng, 3, 2)
    pi, pi_hat = random_policy(rng, 3, 2), random_policy(rng, 3, 2)
    H = auto_horizon(mdp, pi, pi_hat, 0.1, 1e-8)
    r_max = max(np.abs(soft_reward(mdp, p, 0.1)).max() for p in (pi, pi_hat))
    assert 0.9**H * r_max / 0.1 < 1e-9
    assert 0.9 ** (H - 1) * r_max / 0.1 >= 1e-9
    rep = verify_theorem1(mdp, pi, pi_hat, 0.1)
    assert rep.passed and rep.max_violation < 1e-10
    assert "horizon=" in rep.detail


def test_suite_report():
    rep = performance_difference_suite(n_mdps=10, seed=3)
    assert rep.instances == 20 and rep.passed
    assert str(rep).startswith("PASS performance_difference_suite")
    assert str(CheckReport("x", 1, 2.0, 1.0)).startswith("FAIL x")


# --- entropy bound ---------------------------------------------------------


def test_boundary_attains_bound():
    for delta in (0.01, 0.1, 1.0):
        diff, bound = entropy_bound_boundary(delta)
        assert abs(diff - bound) < 1e-12


def test_boundary_pair_only_meets_the_relaxed_constraint():
    # the pair drops the quadratic term, so its true KL exceeds delta
    delta = 0.1
    s = 1.3
    s_hat = s * math.exp(delta + 0.5)
    kl = float(gaussian_kl(np.zeros(1), np.log([s]), np.zeros(1), np.log([s_hat])))
    relaxed = math.log(s_hat / s) - 0.5
    assert relaxed == pytest.approx(delta, abs=1e-12)
    assert kl > delta


def test_entropy_bound_holds_and_is_monotone():
    rng = np.random.default_rng(0)
    cand = entropy_bound_candidates(rng, 20_000)
    prev = -math.inf
    for delta in (0.001, 0.01, 0.1, 0.5):
        best, count = entropy_bound_max_difference(cand, delta)
        assert count > 0 and best <= delta + 0.5
        assert best >= prev
        prev = best
    assert entropy_difference(1.0, math.e) == pytest.approx(1.0)


@pytest.mark.parametrize("delta", [0.01, 0.1])
def test_verify_lemma1(delta):
    rep = verify_lemma1(n_pairs=2000, delta=delta, seed=1)
    assert rep.passed and rep.instances == 2000


# --- total variation -------------------------------------------------------


def test_tv_spot_instance():
    tv, mass = tv_quadrature(0.0, 1.0, 1.0, 1.0)
    # equal variances: TV = 2 Phi(|mu1 - mu2| / 2) - 1
    assert tv == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-14)
    assert tv == pytest.approx(0.38292492254802624, abs=1e-14)
    assert mass < 1e-13
    assert float(gaussian_kl(np.zeros(1), np.zeros(1), np.ones(1), np.zeros(1))) == 0.5


def test_tv_matches_scipy_quad(rng):
    for _ in range(10):
        m1, m2 = rng.uniform(-2, 2, 2)
        s1, s2 = np.exp(rng.uniform(-1.5, 1.5, 2))
        p, q = stats.norm(m1, s1), stats.norm(m2, s2)
        lo, hi = min(m1 - 15 * s1, m2 - 15 * s2), max(m1 + 15 * s1, m2 + 15 * s2)
        ref, _ = integrate.quad(lambda x: abs(p.pdf(x) - q.pdf(x)), lo, hi, limit=400, epsabs=1e-14, epsrel=1e-12,
                                points=[m1, m2])
        assert tv_quadrature(m1, s1, m2, s2)[0] == pytest.approx(0.5 * ref, abs=1e-9)


def test_tv_identical_and_disjoint():
    assert tv_quadrature(0.3, 0.7, 0.3, 0.7)[0] == pytest.approx(0.0, abs=1e-15)
    assert tv_quadrature(-50.0, 0.5, 50.0, 0.5)[0] == pytest.approx(1.0, abs=1e-12)


def test_verify_tv_kl_small():
    rep = verify_tv_kl(n_pairs=500, seed=2)
    assert rep.passed and "mass_error" in rep.detail
