import numpy as np
import pytest

from fxtsode.attacks import (AttackConfig, BallViolation, bim, cls_losses, corrupt, error_rows, fgsm,
                             loss_and_input_grad, pgd)
from fxtsode.model import Dims, ModelParams

from fdcheck import central_diff, rel_error

PARAMS = ModelParams.init(Dims(d_x=2, d_c=4, d_h=3, hidden=6, n_classes=2), seed=1)
X = np.random.default_rng(2).uniform(-1.5, 1.5, size=(40, 2))
Y = np.random.default_rng(3).integers(0, 2, 40)


def test_input_gradient_matches_fd():
    losses, g = loss_and_input_grad(PARAMS, X[:3], Y[:3])
    numeric = central_diff(lambda v: float(np.sum(cls_losses(PARAMS, v, Y[:3]))), X[:3])
    assert rel_error(g, numeric) <= 1e-6
    np.testing.assert_array_equal(losses, cls_losses(PARAMS, X[:3], Y[:3]))


def test_fgsm_zero_eps_is_identity():
    np.testing.assert_array_equal(fgsm(PARAMS, X, Y, 0.0), X)


def test_fgsm_sign_construction():
    adv = fgsm(PARAMS, X, Y, 0.1)
    moved = np.abs(adv - X)
    assert np.max(moved) <= 0.1 + 1e-15
    assert np.all(np.isclose(moved, 0.1, atol=1e-15) | (moved == 0))


def test_fgsm_respects_domain():
    edge = np.array([[2.95, -2.95]])
    _, g = loss_and_input_grad(PARAMS, edge, Y[:1])
    adv = fgsm(PARAMS, edge, Y[:1], 0.1)
    assert np.all(adv >= -3) and np.all(adv <= 3)
    img = fgsm(PARAMS, np.array([[0.0, 1.0]]), Y[:1], 0.5, domain=(0.0, 1.0))
    assert np.all((img >= 0) & (img <= 1))


def test_pgd_single_full_step_equals_fgsm():
    a = pgd(PARAMS, X, Y, AttackConfig(0.2, steps=1, step_size=0.2, random_start=False))
    np.testing.assert_array_equal(a, fgsm(PARAMS, X, Y, 0.2))


def test_pgd_stays_in_ball_and_is_deterministic():
    cfg = AttackConfig(0.15, steps=7, random_start=True)
    a = pgd(PARAMS, X, Y, cfg, rng=np.random.default_rng(4))
    b = pgd(PARAMS, X, Y, cfg, rng=np.random.default_rng(4))
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(a - X)) <= 0.15 + 1e-15
    assert np.max(np.abs(bim(PARAMS, X, Y, 0.15) - X)) <= 0.15 + 1e-15
    with pytest.raises(ValueError):
        pgd(PARAMS, X, Y, cfg)


def test_ball_check_runs_every_iteration(monkeypatch):
    import fxtsode.attacks as atk
    monkeypatch.setattr(atk, "_clip", lambda x, domain: x + 1.0)
    with pytest.raises(BallViolation):
        pgd(PARAMS, X, Y, AttackConfig(0.1, steps=3))


def test_attack_config_defaults_and_validation():
    assert AttackConfig(0.2).alpha == pytest.approx(0.05)
    assert AttackConfig(0.2).steps == 10
    for kw in ({"eps": -1}, {"eps": 0.1, "steps": 0}, {"eps": 0.1, "step_size": 0.0}):
        with pytest.raises(ValueError):
            AttackConfig(**kw)


def test_corrupt_examples():
    rng = np.random.default_rng(5)
    np.testing.assert_array_equal(corrupt(X, "gaussian", 0.0, rng), X)
    np.testing.assert_array_equal(corrupt(X, "impulse", 0.0, rng), X)
    out = corrupt(X, "impulse", 1.0, rng)
    assert np.all((out == -3.0) | (out == 3.0))
    noise = corrupt(np.zeros(100_000), "gaussian", 0.1, rng)
    assert 0.097 <= noise.std() <= 0.103
    half = corrupt(np.zeros(100_000), "impulse", 0.5, rng, domain=(0.0, 1.0))
    assert abs(np.mean(half == 1.0) - 0.25) < 0.01
    with pytest.raises(ValueError):
        corrupt(X, "speckle", 0.1, rng)
    with pytest.raises(ValueError):
        corrupt(X, "impulse", 1.5, rng)


def test_error_rows_schema():
    rows = error_rows(PARAMS, X, Y, [("fgsm", 0.0), ("fgsm", 0.1), ("gaussian", 0.2)], np.random.default_rng(0))
    assert rows[0][:2] == ("clean", 0.0)
    assert rows[1][2] == rows[0][2]  # eps = 0 attack equals clean error
    assert all(0 <= r[2] <= 1 for r in rows)


# trained model

def test_fgsm_raises_error_on_trained_model(baseline_model):
    params, split = baseline_model
    rows = error_rows(params, split.test.X, split.test.y, [("fgsm", e) for e in (0.05, 0.1, 0.2)],
                      np.random.default_rng(0))
    errors = [r[2] for r in rows]
    assert errors == sorted(errors)


def test_pgd_stronger_than_fgsm(baseline_model):
    params, split = baseline_model
    X, y = split.test.X, split.test.y
    eps = 0.2
    l_fgsm = cls_losses(params, fgsm(params, X, y, eps), y)
    l_pgd = cls_losses(params, pgd(params, X, y, AttackConfig(eps, random_start=True), rng=np.random.default_rng(0)), y)
    assert np.mean(l_pgd >= l_fgsm) >= 0.7
