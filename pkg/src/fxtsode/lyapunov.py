"""Quadratic Lyapunov function around a label-dependent optimal state h*.

h* is located by normalized gradient steps on the classification loss of the
output map, starting at the trajectory end point.  It is returned as plain
data: no gradient flows into h* from anything that uses it afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

GRAD_EPS = 1e-12
BOX = 1e3


@dataclass
class LyapunovAnchor:
    h_star: np.ndarray  # (..., d_h)
    label: np.ndarray  # (...)
    source_traj_end: np.ndarray

    def repeat(self, n: int) -> "LyapunovAnchor":
        """Tile along the batch axis, matching ``concat([x] * n, axis=0)``."""
        return LyapunovAnchor(
            np.concatenate([self.h_star] * n, axis=0),
            np.concatenate([self.label] * n, axis=0),
            np.concatenate([self.source_traj_end] * n, axis=0),
        )


def lyapunov_value(h, anchor: LyapunovAnchor):
    """V = 0.5 ||h - h*||^2 (tensor in, tensor out; arrays in, array out)."""
    if isinstance(h, Tensor):
        d = h - Tensor(anchor.h_star)
        return ad.scale(ad.dot(d, d), 0.5)
    d = np.asarray(h) - anchor.h_star
    return 0.5 * np.einsum("...i,...i->...", d, d)


def lyapunov_grad(h, anchor: LyapunovAnchor) -> np.ndarray:
    return np.asarray(h.data if isinstance(h, Tensor) else h) - anchor.h_star


def _affine(psi: Sequence) -> tuple[np.ndarray, np.ndarray]:
    w, b = (a.data if isinstance(a, Tensor) else np.asarray(a) for a in psi)
    return w, b


def cls_loss(h: np.ndarray, y: np.ndarray, psi: Sequence) -> np.ndarray:
    """Per-sample cross-entropy of the affine output map."""
    w, b = _affine(psi)
    logp = ad.log_softmax(h @ w.T + b)
    return -np.take_along_axis(logp, np.asarray(y)[..., None], axis=-1)[..., 0]


def cls_loss_grad(h: np.ndarray, y: np.ndarray, psi: Sequence) -> np.ndarray:
    """Gradient of ``cls_loss`` w.r.t. h: W^T (softmax(Wh + b) - onehot(y))."""
    w, b = _affine(psi)
    p = np.exp(ad.log_softmax(h @ w.T + b))
    np.put_along_axis(p, np.asarray(y)[..., None], np.take_along_axis(p, np.asarray(y)[..., None], -1) - 1.0, -1)
    return p @ w


def normalized_descent(traj_end, grad_fn, loss_fn=None, eta2: float = 2.0, n_inner: int = 3) -> np.ndarray:
    """Run the inner h* updates for arbitrary per-row gradient/loss callables.

    Each of the ``n_inner`` updates moves h* by exactly ``eta2 * ||h(t_Gamma)|| / n_inner``
    along the normalized negative gradient.  An update is skipped for a row when
    its gradient norm is below 1e-12 or, if ``loss_fn`` is given, when it would
    increase that row's loss.  Results are clipped to the box [-1e3, 1e3]^d_h.
    """
    if eta2 <= 0 or n_inner < 1:
        raise ValueError("need eta2 > 0 and n_inner >= 1")
    end = np.asarray(traj_end, dtype=np.float64)
    h_star = end.copy()
    step = eta2 * np.linalg.norm(end, axis=-1, keepdims=True) / n_inner
    loss = None if loss_fn is None else loss_fn(h_star)
    for _ in range(n_inner):
        g = np.asarray(grad_fn(h_star), dtype=np.float64)
        gn = np.linalg.norm(g, axis=-1, keepdims=True)
        active = gn > GRAD_EPS
        cand = np.clip(h_star - step * g / np.where(active, gn, 1.0), -BOX, BOX)
        accept = active[..., 0]
        if loss_fn is not None:
            cand_loss = loss_fn(cand)
            accept = accept & (cand_loss <= loss)
            loss = np.where(accept, cand_loss, loss)
        h_star = np.where(accept[..., None], cand, h_star)
    return h_star


def optimal_state(traj_end, y, psi: Sequence, eta2: float = 2.0, n_inner: int = 3) -> LyapunovAnchor:
    """Approximate argmin_h L_cls(psi(h), y) starting from h(t_Gamma), batched over rows."""
    end = np.array(traj_end.data if isinstance(traj_end, Tensor) else traj_end, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    h_star = normalized_descent(
        end,
        grad_fn=lambda h: cls_loss_grad(h, y, psi),
        loss_fn=lambda h: cls_loss(h, y, psi),
        eta2=eta2,
        n_inner=n_inner,
    )
    return LyapunovAnchor(h_star=h_star, label=y, source_traj_end=end)
