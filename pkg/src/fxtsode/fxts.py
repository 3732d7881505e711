"""Fixed-time-stability loss: point-wise hinge, perturbation sampling, knot sums."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .lyapunov import LyapunovAnchor, lyapunov_value
from .model import dynamics
from .ode import SolverConfig, integrate_trajectory

VIOLATION_THRESHOLD = 1e-3


@dataclass(frozen=True)
class FxtsParams:
    alpha1: float = 10.0
    alpha2: float = 1.0
    mu: float = 2.0
    gamma1: float = field(init=False)
    gamma2: float = field(init=False)

    def __post_init__(self):
        values = (self.alpha1, self.alpha2, self.mu)
        if not all(np.isfinite(values)):
            raise ValueError(f"non-finite FxTS parameters {values}")
        if not (self.alpha1 > 0 and self.alpha2 > 0 and self.mu > 1):
            raise ValueError(f"need alpha1, alpha2 > 0 and mu > 1, got {values}")
        object.__setattr__(self, "gamma1", 1.0 + 1.0 / self.mu)
        object.__setattr__(self, "gamma2", 1.0 - 1.0 / self.mu)

    @property
    def settling_time(self) -> float:
        return self.mu * np.pi / (2.0 * np.sqrt(self.alpha1 * self.alpha2))


@dataclass(frozen=True)
class PerturbationConfig:
    n_samples: int = 16
    radius_max: float = 1.2

    def __post_init__(self):
        if self.n_samples < 0 or self.radius_max < 0:
            raise ValueError("n_samples and radius_max must be >= 0")


def pointwise_loss(h, anchor: LyapunovAnchor, f_val, p: FxtsParams) -> Tensor:
    """max{0, (h - h*) . f + a1 V^g1 + a2 V^g2}, one value per row.

    The powers take their derivative at max(V, 1e-12); values use V itself.
    """
    h = h if isinstance(h, Tensor) else Tensor(h)
    f_val = f_val if isinstance(f_val, Tensor) else Tensor(f_val)
    diff = h - Tensor(anchor.h_star)
    v = ad.scale(ad.dot(diff, diff), 0.5)
    vdot = ad.dot(diff, f_val)
    term = vdot + p.alpha1 * ad.pow_clamped(v, p.gamma1) + p.alpha2 * ad.pow_clamped(v, p.gamma2)
    return ad.hinge(term)


def draw_directions(batch: int, dim: int, cfg: PerturbationConfig, rng: np.random.Generator):
    """Unit directions (n, batch, dim) and radii (n, batch) for perturbation sampling."""
    n = cfg.n_samples
    delta = rng.standard_normal((n, batch, dim))
    norms = np.linalg.norm(delta, axis=-1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        delta[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(delta, axis=-1)
    radii = rng.uniform(0.0, cfg.radius_max, size=(n, batch))
    return delta / norms[..., None], radii


def sample_perturbations(xc, cfg: PerturbationConfig, rng: np.random.Generator) -> Tensor:
    """x_c + r_j ||x_c|| u_j for j = 1..n, stacked j-major into ``(n * batch, d)``.

    u_j is a uniformly random unit direction and r_j ~ U(0, radius_max).
    Gradients flow into x_c through both terms.
    """
    xc = xc if isinstance(xc, Tensor) else Tensor(xc)
    squeeze = xc.data.ndim == 1
    if squeeze:
        xc = ad.reshape(xc, (1, -1))
    batch, dim = xc.shape
    units, radii = draw_directions(batch, dim, cfg, rng)
    if cfg.n_samples == 0:
        return Tensor(np.zeros((0, dim)))
    norm = ad.reshape(ad.l2norm(xc), (batch, 1))
    rep = ad.concat([xc] * cfg.n_samples, axis=0)
    norm_rep = ad.concat([norm] * cfg.n_samples, axis=0)
    offset = Tensor(radii.reshape(-1, 1) * units.reshape(-1, dim))
    return rep + ad.mul(norm_rep, offset)


@dataclass
class FxtsLossResult:
    loss: Tensor
    pointwise: np.ndarray  # (n_traj, batch, knots) values at t_1..t_Gamma

    @property
    def violation_rate(self) -> float:
        if self.pointwise.size == 0:
            return 0.0
        return float(np.mean(self.pointwise > VIOLATION_THRESHOLD))


def knot_losses(xc_rows: Tensor, f_params: Sequence, anchors: LyapunovAnchor, p: FxtsParams,
                solver: SolverConfig, d_h: int) -> list[Tensor]:
    """Point-wise losses at t_1..t_Gamma of trajectories driven by ``xc_rows`` from h(0)=0."""
    h0 = Tensor(np.zeros((xc_rows.shape[0], d_h)))
    traj = integrate_trajectory(lambda t, h: dynamics(t, xc_rows, h, f_params), h0, solver)
    return [pointwise_loss(h, anchors, dynamics(t, xc_rows, h, f_params), p)
            for t, h in zip(traj.times[1:], traj.states[1:])]


def fxts_loss(xc, f_params: Sequence, anchors: LyapunovAnchor, cfg: PerturbationConfig, p: FxtsParams,
              solver: SolverConfig, rng: np.random.Generator, d_h: int) -> FxtsLossResult:
    """Sum over perturbation samples j and knots i of the point-wise loss, averaged over the batch.

    Knot terms are summed without a 1/Gamma weight.  With ``cfg.n_samples == 0``
    the sum runs over the unperturbed trajectory instead.
    """
    xc = xc if isinstance(xc, Tensor) else Tensor(xc)
    batch = xc.shape[0]
    if cfg.n_samples == 0:
        rows, anchors_rep, n_traj = xc, anchors, 1
    else:
        rows = sample_perturbations(xc, cfg, rng)
        anchors_rep, n_traj = anchors.repeat(cfg.n_samples), cfg.n_samples
    terms = knot_losses(rows, f_params, anchors_rep, p, solver, d_h)
    total = ad.tsum(terms[0])
    for term in terms[1:]:
        total = total + ad.tsum(term)
    values = np.stack([t.data.reshape(n_traj, batch) for t in terms], axis=-1)
    return FxtsLossResult(loss=ad.scale(total, 1.0 / batch), pointwise=values)
