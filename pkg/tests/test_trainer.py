import dataclasses
import math

import numpy as np
import pytest

from dtae_rl.exceptions import ConfigError, NumericError
from dtae_rl.gaussian_policy import GaussianPolicy, ValueNet, entropy_of, log_prob_and_grad, log_prob_of
from dtae_rl.trainer import (
    TrainConfig,
    TrainState,
    clipped_surrogate_loss,
    compute_t_terms,
    linear_schedule,
    load_checkpoint,
    ppo_iteration,
    save_checkpoint,
    train,
    train_iteration,
    value_regression_loss,
)
from oracles import finite_difference_grads, gradient_rel_error, surrogate_instance

SMALL = dict(total_steps=2048, steps_per_batch=512, epochs_per_batch=2, hidden_units=16)


# --- config and schedules --------------------------------------------------


def test_defaults():
    c = TrainConfig()
    assert (c.gamma, c.lam, c.alpha, c.eta_0, c.clip_eps_0, c.lr_0) == (0.99, 0.95, 0.1, 1e-3, 0.2, 3e-4)
    assert (c.entropy_loss_coef, c.value_loss_coef, c.minibatch_size, c.combine) == (1.0, 0.5, 64, "mean")
    assert (c.epochs_per_batch, c.steps_per_batch) == (10, 2048)


@pytest.mark.parametrize(
    "bad",
    [dict(env="Nope"), dict(minibatch_size=0), dict(total_steps=-1), dict(lr_0=-1.0), dict(lam=0.0),
     dict(combine="median"), dict(entropy_state="later"), dict(algorithm="trpo")],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_linear_schedule():
    assert linear_schedule(3e-4, 0.0) == 3e-4
    assert linear_schedule(3e-4, 1.0) == 0.0
    assert linear_schedule(3e-4, 0.5) == 1.5e-4
    assert linear_schedule(0.2, 1.7) == 0.0


# --- T terms and losses ----------------------------------------------------


def test_t_terms_examples():
    adv = np.array([0.5, -1.0])
    np.testing.assert_array_equal(compute_t_terms(adv, 2.0, [2.0, 2.0], 0.3), adv)
    np.testing.assert_array_equal(compute_t_terms(adv, 5.0, [1.0, 1.0], 0.0), adv)
    # sigma_new = e * sigma_old adds exactly one nat
    h_old = float(0.0 + 0.5 * np.log(2 * np.pi * np.e))
    h_new = float(1.0 + 0.5 * np.log(2 * np.pi * np.e))
    np.testing.assert_allclose(compute_t_terms(adv, h_new, [h_old, h_old], 0.1), adv + 0.1, atol=1e-15)
    masked = compute_t_terms(adv, h_new, [h_old, h_old], 0.1, mask=np.array([True, False]))
    np.testing.assert_allclose(masked, [0.6, -1.0], atol=1e-15)


def test_surrogate_at_old_policy_is_minus_mean_t(rng):
    pol, s, a, _, adv, _, _ = surrogate_instance(rng)
    old = log_prob_of(pol, s, a)
    h = np.full(len(adv), entropy_of(pol))
    loss, _, info = clipped_surrogate_loss(pol, s, a, old, adv, h, 0.01, 0.2)
    np.testing.assert_array_equal(info["ratio"], 1.0)
    assert loss == pytest.approx(-adv.mean(), abs=1e-15)


def test_clip_inactive_gradient_equals_policy_gradient(rng):
    pol, s, a, _, adv, _, _ = surrogate_instance(rng)
    old = log_prob_of(pol, s, a)
    _, grads, _ = clipped_surrogate_loss(pol, s, a, old, adv, np.zeros(len(adv)), 0.0, 0.2)
    _, pg = log_prob_and_grad(pol, s, a, -adv / len(adv))
    for g, e in zip(grads, pg):
        np.testing.assert_allclose(g, e, atol=1e-15)


def test_clipped_sample_has_no_ratio_gradient(rng):
    pol, s, a, _, _, _, _ = surrogate_instance(rng, n=1)
    old = log_prob_of(pol, s, a) - math.log(1.5)
    loss, grads, info = clipped_surrogate_loss(pol, s, a, old, np.array([2.0]), np.zeros(1), 0.0, 0.2)
    assert info["ratio"][0] == pytest.approx(1.5)
    assert loss == pytest.approx(-1.2 * 2.0)
    assert all(np.all(g == 0.0) for g in grads)


@pytest.mark.parametrize("clip,state", [(True, "next"), (True, "current"), (False, "next")])
def test_surrogate_gradient_matches_finite_differences(rng, clip, state):
    for _ in range(5):
        pol, s, a, old, adv, h_old, mask = surrogate_instance(rng)
        mask = mask if state == "next" else None

        def f():
            return clipped_surrogate_loss(pol, s, a, old, adv, h_old, 0.7, 0.2, 1.0, mask, clip)[0]

        _, grads, _ = clipped_surrogate_loss(pol, s, a, old, adv, h_old, 0.7, 0.2, 1.0, mask, clip)
        assert gradient_rel_error(grads, finite_difference_grads(f, pol.arrays())) < 1e-4


def test_non_finite_ratio_raises(rng):
    pol, s, a, old, adv, h, _ = surrogate_instance(rng)
    old = old - 1e4
    with pytest.raises(NumericError):
        clipped_surrogate_loss(pol, s, a, old, adv, h, 0.0, 0.2)


def test_value_loss_examples_and_gradient(rng):
    v = ValueNet.init(rng, 3, (6,))
    s = rng.normal(size=(10, 3))
    loss, _ = value_regression_loss(v, s, v(s), 0.5)
    assert loss == 0.0
    v.net.weights[-1][:] = 0.0
    v.net.biases[-1][:] = 2.0
    loss, _ = value_regression_loss(v, s, np.full(10, 5.0), 0.5)
    assert loss == pytest.approx(0.5 * 9.0)
    v = ValueNet.init(rng, 3, (6,))
    targets = rng.normal(size=10)
    _, grads = value_regression_loss(v, s, targets)
    fd = finite_difference_grads(lambda: value_regression_loss(v, s, targets)[0], v.arrays())
    assert gradient_rel_error(grads, fd) < 1e-4


# --- iterations ------------------------------------------------------------


def test_ppo_reduction_is_bit_identical():
    cfg = TrainConfig(eta_0=0.0, estimator="gae", seed=3, **{**SMALL, "total_steps": 1536})
    a, b = TrainState.create(cfg), TrainState.create(cfg)
    for _ in range(3):
        ma, mb = train_iteration(a), ppo_iteration(b)
        assert ma.row() == mb.row()
    for x, y in zip(a.policy.arrays() + a.value.arrays(), b.policy.arrays() + b.value.arrays()):
        np.testing.assert_array_equal(x, y)


def test_iteration_is_deterministic():
    cfg = TrainConfig(seed=7, **SMALL)
    m1 = train_iteration(TrainState.create(cfg))
    m2 = train_iteration(TrainState.create(cfg))
    assert m1.row() == m2.row()


def test_shadow_holds_pre_update_parameters():
    state = TrainState.create(TrainConfig(**SMALL))
    for _ in range(2):
        before_p, before_v = state.policy.copy(), state.value.copy()
        train_iteration(state)
        for x, y in zip(state.shadow_policy.arrays(), before_p.arrays()):
            np.testing.assert_array_equal(x, y)
        for x, y in zip(state.shadow_value.arrays(), before_v.arrays()):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(state.policy.log_std, before_p.log_std) or not np.array_equal(
            state.policy.mean_net.weights[0], before_p.mean_net.weights[0]
        )


def test_train_stops_at_total_steps_with_monotone_schedules():
    cfg = TrainConfig(**{**SMALL, "total_steps": 1300})
    seen = []
    state, history = train(cfg, callback=seen.append)
    assert seen == history
    assert [m.step for m in history] == [512, 1024, 1300]
    for name in ("lr", "clip_eps", "eta"):
        vals = [getattr(m, name) for m in history]
        assert all(x >= y >= 0 for x, y in zip(vals, vals[1:]))
    assert history[0].lr == cfg.lr_0
    _, empty = train(cfg.replace(total_steps=0))
    assert empty == []


def test_smoke_run_stays_finite():
    cfg = TrainConfig(env="PendulumSwingup", total_steps=50 * 128, steps_per_batch=128, epochs_per_batch=2,
                      minibatch_size=32, hidden_units=16)
    _, history = train(cfg)
    assert len(history) == 50
    for m in history:
        for k in ("policy_loss", "value_loss", "mean_entropy", "mean_kl", "policy_grad_norm", "value_grad_norm"):
            assert math.isfinite(getattr(m, k))


def test_numeric_failure_writes_diagnostic_checkpoint(tmp_path):
    state = TrainState.create(TrainConfig(**SMALL), diagnostic_dir=tmp_path)
    state.policy.mean_net.weights[0][0, 0] = np.nan
    with pytest.raises(NumericError):
        train_iteration(state)
    files = list(tmp_path.glob("diagnostic_*.ckpt"))
    assert len(files) == 1
    policy, _, env = load_checkpoint(files[0])
    assert env == "PointMass" and np.isnan(policy.mean_net.weights[0][0, 0])


def test_checkpoint_round_trip(tmp_path, rng):
    pol = GaussianPolicy.init(rng, 3, 1, (5, 4), log_std=-0.3)
    val = ValueNet.init(rng, 3, (5, 4))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, pol, val, "PendulumSwingup")
    p2, v2, env = load_checkpoint(path)
    assert env == "PendulumSwingup"
    for x, y in zip(pol.arrays() + val.arrays(), p2.arrays() + v2.arrays()):
        np.testing.assert_array_equal(x, y)


def test_config_replace_is_dataclass_copy():
    c = TrainConfig()
    d = c.replace(alpha=0.4)
    assert d.alpha == 0.4 and c.alpha == 0.1
    assert dataclasses.asdict(d).keys() == dataclasses.asdict(c).keys()
