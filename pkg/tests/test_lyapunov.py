import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fxtsode import autodiff as ad
from fxtsode.autodiff import Tensor
from fxtsode.lyapunov import (BOX, LyapunovAnchor, cls_loss, cls_loss_grad, lyapunov_grad, lyapunov_value,
                              normalized_descent, optimal_state)

from fdcheck import central_diff, rel_error


def anchor(h_star):
    h_star = np.asarray(h_star, dtype=np.float64)
    return LyapunovAnchor(h_star, np.zeros(h_star.shape[:-1], dtype=np.int64), h_star.copy())


def test_value_examples():
    a = anchor([1.0, 2.0, 3.0])
    assert lyapunov_value(np.array([1.0, 2.0, 3.0]), a) == 0.0
    assert lyapunov_value(np.array([4.0, 6.0, 3.0]), a) == pytest.approx(12.5)
    rng = np.random.default_rng(0)
    h, hs = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    d = h - hs
    np.testing.assert_allclose(lyapunov_value(Tensor(h), anchor(hs)).data, 0.5 * np.sum(d * d, axis=1), rtol=1e-14)


def test_gradient_examples():
    np.testing.assert_array_equal(lyapunov_grad(np.array([1.0, 2.0]), anchor([1.0, 2.0])), [0.0, 0.0])
    np.testing.assert_array_equal(lyapunov_grad(np.array([1.0, -2.0]), anchor([0.0, 0.0])), [1.0, -2.0])
    rng = np.random.default_rng(1)
    h, hs = rng.standard_normal(4), rng.standard_normal(4)
    g = ad.gradient(lambda h: lyapunov_value(h, anchor(hs)), {"h": h}, ["h"])["h"]
    assert np.max(np.abs(g - lyapunov_grad(h, anchor(hs)))) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3,), elements=st.floats(-1e3, 1e3)), arrays(np.float64, (3,), elements=st.floats(-1e3, 1e3)))
def test_positive_definite(h, hs):
    v = lyapunov_value(h, anchor(hs))
    assert v >= 0
    if np.any(h != hs):
        assert v > 0 or np.linalg.norm(h - hs) < 1e-150


def test_cls_loss_grad_matches_fd():
    rng = np.random.default_rng(2)
    psi = [rng.standard_normal((3, 4)), rng.standard_normal(3)]
    h, y = rng.standard_normal((5, 4)), rng.integers(0, 3, 5)
    numeric = central_diff(lambda v: float(np.sum(cls_loss(v, y, psi))), h)
    assert rel_error(cls_loss_grad(h, y, psi), numeric) <= 1e-6


def test_zero_gradient_skips_updates():
    end = np.array([[3.0, 4.0]])
    out = normalized_descent(end, grad_fn=lambda h: np.zeros_like(h), eta2=2.0, n_inner=3)
    np.testing.assert_array_equal(out, end)


def test_worked_inner_loop_example():
    out = normalized_descent(np.array([[3.0, 4.0]]), grad_fn=lambda h: np.array([[0.0, 1.0]]), eta2=2.0, n_inner=2)
    np.testing.assert_allclose(out, [[3.0, -6.0]], atol=1e-15)
    one = normalized_descent(np.array([[3.0, 4.0]]), grad_fn=lambda h: np.array([[0.0, 1.0]]), eta2=2.0, n_inner=1)
    np.testing.assert_allclose(one, [[3.0, -6.0]], atol=1e-15)


def test_step_size_is_normalized():
    rng = np.random.default_rng(3)
    end = rng.standard_normal((4, 3))
    g = rng.standard_normal((4, 3)) * 1e-3
    out = normalized_descent(end, grad_fn=lambda h: g, eta2=1.5, n_inner=1)
    np.testing.assert_allclose(np.linalg.norm(out - end, axis=1), 1.5 * np.linalg.norm(end, axis=1), rtol=1e-12)


def test_box_clip():
    out = normalized_descent(np.array([[900.0, 0.0]]), grad_fn=lambda h: np.array([[-1.0, 0.0]]), eta2=2.0, n_inner=1)
    np.testing.assert_array_equal(out, [[BOX, 0.0]])


def test_optimal_state_monotone_for_linear_softmax():
    rng = np.random.default_rng(4)
    for trial in range(20):
        psi = [rng.standard_normal((3, 5)), rng.standard_normal(3)]
        end = rng.standard_normal((16, 5)) * rng.uniform(0.01, 5)
        y = rng.integers(0, 3, 16)
        a = optimal_state(end, y, psi, eta2=2.0, n_inner=3)
        assert np.all(cls_loss(a.h_star, y, psi) <= cls_loss(end, y, psi))
        assert np.all(np.isfinite(a.h_star))
        np.testing.assert_array_equal(a.source_traj_end, end)


def test_optimal_state_binary_moves_along_weight_difference():
    # binary affine output: the loss gradient direction is fixed, so h* = h_end + 2||h_end|| u
    psi = [np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2)]
    end = np.array([[0.3, 0.4]])
    a = optimal_state(end, np.array([1]), psi, eta2=2.0, n_inner=3)
    u = np.array([-1.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(a.h_star, end + 2 * 0.5 * u, atol=1e-14)


def test_optimal_state_rejects_bad_settings():
    with pytest.raises(ValueError):
        normalized_descent(np.ones((1, 2)), lambda h: h, eta2=0.0)
    with pytest.raises(ValueError):
        normalized_descent(np.ones((1, 2)), lambda h: h, n_inner=0)


def test_anchor_repeat_matches_concat():
    a = LyapunovAnchor(np.arange(6.0).reshape(3, 2), np.array([0, 1, 0]), np.zeros((3, 2)))
    r = a.repeat(2)
    np.testing.assert_array_equal(r.h_star, np.concatenate([a.h_star, a.h_star]))
    assert r.label.tolist() == [0, 1, 0, 0, 1, 0]
