import numpy as np
import pytest
from hypothesis import given, strategies as st

from advbeam.adversarial import (AdvTrainParams, AttackParams, adversarial_training, clip_ball,
                                 complex_fgsm, default_alpha, fgsm_step, prediction_error_rms,
                                 sign_complex)
from advbeam.channel import flatten_complex
from advbeam.errors import ConfigError, DataError
from advbeam.nn import TrainConfig, backward, forward, init_model, mse_loss

finite = st.floats(-1e3, 1e3, allow_nan=False)


def trained(seed=0, dims=(8, 3)):
    model = init_model(dims[0], dims[1], seed, hidden=(16, 16))
    model.r_max = 1.0
    return model


def test_sign_complex():
    assert sign_complex(np.array([3 - 2j]))[0] == 1 - 1j
    assert sign_complex(np.array([0j]))[0] == 0
    np.testing.assert_array_equal(sign_complex(np.array([-0.1 + 5j, 2 - 0j])), [-1 + 1j, 1 + 0j])


def test_fgsm_step():
    np.testing.assert_allclose(fgsm_step(np.zeros(2), np.array([5.0, -3.0]), 0.1), [0.1, -0.1])
    x = np.array([0.3, -0.7])
    assert np.array_equal(fgsm_step(x, np.array([1.0, 1.0]), 0.0), x)
    with pytest.raises(DataError):
        fgsm_step(x, np.zeros(3), 0.1)


def test_complex_step_equals_interleaved_real(rng):
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    g = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    via_complex = x + 0.2 * sign_complex(g)
    np.testing.assert_allclose(flatten_complex(fgsm_step(x, g, 0.2)), flatten_complex(via_complex))
    np.testing.assert_allclose(flatten_complex(via_complex),
                               fgsm_step(flatten_complex(x), flatten_complex(g), 0.2))


@given(st.lists(finite, min_size=1, max_size=20), st.floats(1e-3, 5.0))
def test_fgsm_linf_equals_eps(values, eps):
    x = np.array(values)
    g = np.where(np.arange(len(x)) % 2 == 0, 1.0, -2.0)
    assert np.max(np.abs(fgsm_step(x, g, eps) - x)) == pytest.approx(eps, rel=1e-9, abs=1e-9)


def test_clip_ball():
    assert clip_ball(np.array([0.35]), np.array([0.0]), 0.1)[0] == 0.1
    x = np.array([0.05, -0.02])
    np.testing.assert_array_equal(clip_ball(x, np.zeros(2), 0.1), x)
    z = clip_ball(np.array([0.5 - 0.5j]), np.array([0j]), 0.1)
    assert z[0] == 0.1 - 0.1j


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20), st.floats(0, 10))
def test_clip_idempotent_and_bounded(pairs, eps):
    c, o = np.array(pairs).T
    once = clip_ball(c, o, eps)
    assert np.array_equal(clip_ball(once, o, eps), once)
    assert np.all(np.abs(once - o) <= eps + 1e-12)


def test_attack_rejects_untrained_and_bad_dims(rng):
    model = init_model(8, 3, 0, hidden=(4,))
    with pytest.raises(ConfigError):
        complex_fgsm(np.zeros(8), np.zeros(3), model, AttackParams(0.1, alpha=1.0))
    model.r_max = 1.0
    with pytest.raises(DataError):
        complex_fgsm(np.zeros(6), np.zeros(3), model, AttackParams(0.1, alpha=1.0))
    with pytest.raises(ConfigError):
        complex_fgsm(np.zeros(8), np.zeros(3), model, AttackParams(0.1))


def test_attack_params_validation():
    for bad in [dict(epsilon=-0.1), dict(epsilon=np.inf), dict(epsilon=0.1, max_iters=0),
                dict(epsilon=0.1, alpha=-1.0)]:
        with pytest.raises(ConfigError):
            AttackParams(**bad)
    with pytest.raises(ConfigError):
        AdvTrainParams(max_rounds=0)
    with pytest.raises(ConfigError):
        AdvTrainParams(augment_ratio=0.0)


def test_zero_budget_is_identity(rng):
    model = trained()
    x = rng.standard_normal((6, 8))
    y = rng.uniform(0, 1, (6, 3))
    assert np.array_equal(complex_fgsm(x, y, model, AttackParams(0.0, alpha=np.inf)), x)


def test_single_iteration_equals_step_then_clip(rng):
    model = trained(1)
    x = rng.standard_normal((4, 8))
    y = rng.uniform(0, 1, (4, 3))
    adv = complex_fgsm(x, y, model, AttackParams(0.05, alpha=np.inf, max_iters=1))
    _, g = backward(model, x, y)
    assert np.array_equal(adv, clip_ball(fgsm_step(x, g, 0.05), x, 0.05))


def test_alpha_zero_stops_after_one_iteration(rng):
    model = trained(2)
    x = rng.standard_normal(8)
    y = rng.uniform(0, 1, 3)
    p = AttackParams(0.05, alpha=0.0, max_iters=10)
    one = complex_fgsm(x, y, model, AttackParams(0.05, alpha=np.inf, max_iters=1))
    assert np.array_equal(complex_fgsm(x, y, model, p), one)


def test_early_stop_returns_post_update_iterate(rng):
    checked = 0
    for seed in range(20):
        model = trained(seed)
        x = rng.standard_normal(8)
        y = rng.uniform(0, 1, 3)
        iterates = [complex_fgsm(x, y, model, AttackParams(0.02, np.inf, max_iters=t))
                    for t in range(1, 7)]
        dists = [np.linalg.norm(forward(model, it) - y) for it in iterates]
        # alpha just above every earlier distance makes the stop fire right after update t
        t = next((t for t in range(1, 6) if dists[t] > max(dists[:t])), None)
        if t is None:
            continue
        alpha = 0.5 * (max(dists[:t]) + dists[t])
        got = complex_fgsm(x, y, model, AttackParams(0.02, alpha, max_iters=10))
        assert np.array_equal(got, iterates[t])
        checked += 1
    assert checked >= 3


def test_rows_stop_independently(rng):
    model = trained(4)
    x = rng.standard_normal((5, 8))
    y = rng.uniform(0, 1, (5, 3))
    p = AttackParams(0.03, alpha=0.8, max_iters=7)
    batch = complex_fgsm(x, y, model, p)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], complex_fgsm(x[i], y[i], model, p))


def test_complex_input_roundtrip(rng):
    model = trained(5)
    xc = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    y = rng.uniform(0, 1, 3)
    p = AttackParams(0.1, alpha=np.inf, max_iters=3)
    adv = complex_fgsm(xc, y, model, p)
    assert np.iscomplexobj(adv) and adv.shape == xc.shape
    np.testing.assert_array_equal(flatten_complex(adv),
                                  complex_fgsm(flatten_complex(xc), y, model, p))


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.01, 0.07, 0.3, 0.5]),
       st.integers(1, 10))
def test_budget_invariant(seed, eps, iters):
    rng = np.random.default_rng(seed)
    model = trained(seed % 7)
    x = rng.standard_normal((6, 8))
    y = rng.uniform(0, 1, (6, 3))
    adv = complex_fgsm(x, y, model, AttackParams(eps, alpha=np.inf, max_iters=iters))
    assert np.max(np.abs(adv - x)) <= eps + 1e-12


def test_loss_ascent_on_trained_model(small_run):
    _, _, va, te, model, _ = small_run
    alpha = default_alpha(model, va.inputs, va.targets)
    batches = np.array_split(np.arange(len(te)), 10)
    for eps in (0.01, 0.05, 0.1):
        adv = complex_fgsm(te.inputs, te.targets, model, AttackParams(eps), alpha)
        ups = [mse_loss(forward(model, adv[b]), te.targets[b]) >
               mse_loss(forward(model, te.inputs[b]), te.targets[b]) for b in batches]
        assert np.mean(ups) >= 0.95


def test_default_alpha_is_twice_rms(rng):
    model = trained(6)
    x = rng.standard_normal((20, 8))
    y = rng.uniform(0, 1, (20, 3))
    err = forward(model, x) - y
    rms = np.sqrt(np.mean(np.sum(err ** 2, axis=1)))
    assert prediction_error_rms(model, x, y) == pytest.approx(rms)
    assert default_alpha(model, x, y) == pytest.approx(2 * rms)


def regression_task(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 8))
    y = 0.5 + 0.4 * np.tanh(x[:, :3])
    return x, y


def test_adv_training_zero_budget_matches_clean():
    x, y = regression_task()
    cfg = TrainConfig(epochs=2, seed=1)
    res = adversarial_training(x, y, cfg, AdvTrainParams(AttackParams(0.0), max_rounds=5))
    ref = adversarial_training(x, y, cfg, AdvTrainParams(AttackParams(0.1), max_rounds=1))
    assert res.stop_reason == "zero_budget" and len(res.rounds) == 1
    assert all(np.array_equal(p, q) for p, q in zip(res.model.params(), ref.model.params()))


def test_adv_training_round_structure():
    x, y = regression_task()
    cfg = TrainConfig(epochs=2, seed=1)
    one = adversarial_training(x, y, cfg, AdvTrainParams(AttackParams(0.1), max_rounds=1))
    assert one.stop_reason == "max_rounds" and len(one.rounds) == 1
    res = adversarial_training(x, y, cfg, AdvTrainParams(AttackParams(0.1), max_rounds=3,
                                                         steady_state_tol=0.0))
    assert res.stop_reason == "max_rounds" and len(res.rounds) == 3
    n0 = res.rounds[0].n_train
    assert [r.n_train for r in res.rounds] == [n0, 2 * n0, 2 * n0]
    half = adversarial_training(x, y, cfg, AdvTrainParams(AttackParams(0.1), max_rounds=2,
                                                          augment_ratio=0.5))
    assert half.rounds[1].n_train == n0 + round(0.5 * n0)


def test_adv_training_steady_state_stop():
    x, y = regression_task()
    res = adversarial_training(x, y, TrainConfig(epochs=1, seed=0),
                               AdvTrainParams(AttackParams(0.05), max_rounds=10,
                                              steady_state_tol=10.0))
    assert res.stop_reason == "steady_state" and len(res.rounds) == 2


def test_adv_training_empty():
    with pytest.raises(DataError):
        adversarial_training(np.zeros((0, 8)), np.zeros((0, 3)), TrainConfig(), AdvTrainParams())


def test_adv_training_improves_robustness():
    x, y = regression_task(800)
    cfg = TrainConfig(epochs=5, seed=2, dropout=0.0)
    attack = AttackParams(0.3, alpha=np.inf)
    clean = adversarial_training(x, y, cfg, AdvTrainParams(attack, max_rounds=1)).model
    robust = adversarial_training(x, y, cfg, AdvTrainParams(attack, max_rounds=4)).model
    xt, yt = regression_task(300, seed=9)
    def attacked(m):
        return mse_loss(forward(m, complex_fgsm(xt, yt, m, attack)), yt)
    assert attacked(robust) < attacked(clean)
