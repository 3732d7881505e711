"""Robust FxTS training loop, plain Neural ODE baseline, optimizer and evaluation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, Split, split_and_batch
from .fxts import FxtsParams, PerturbationConfig, VIOLATION_THRESHOLD, fxts_loss, knot_losses, sample_perturbations
from .lyapunov import lyapunov_value, optimal_state
from .model import Dims, ModelParams, extract_features, forward, forward_features
from .ode import SolverConfig, SolverError

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("epoch", "cls_loss", "fxts_loss", "train_err", "test_err", "violation_rate", "wall_time")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, detail: str = "non-finite loss"):
        super().__init__(f"training diverged in epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01  # eta_1
    epochs: int = 20  # N_1, counted in full passes
    eta2: float = 2.0
    n_inner: int = 3  # N_2
    n_delta: int = 16
    radius_max: float = 1.2
    knots: int = 5  # Gamma
    substeps: int = 4
    lam: float = 1.0
    batch: int = 64
    seed: int = 0
    alpha1: float = 10.0
    alpha2: float = 1.0
    mu: float = 2.0
    train_frac: float = 0.8
    d_c: int = 16
    d_h: int = 16
    hidden: int = 32

    def __post_init__(self):
        if self.lr <= 0 or self.eta2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.n_inner < 1 or self.batch < 1 or self.n_delta < 0:
            raise ValueError("invalid iteration/batch/sample counts")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        self.fxts, self.solver, self.perturbation  # validate derived configs

    @property
    def fxts(self) -> FxtsParams:
        return FxtsParams(self.alpha1, self.alpha2, self.mu)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(self.knots, self.substeps)

    @property
    def perturbation(self) -> PerturbationConfig:
        return PerturbationConfig(self.n_delta, self.radius_max)

    def dims(self, ds: Dataset) -> Dims:
        return self.dims_for(ds.d_x, ds.n_classes)

    def dims_for(self, d_x: int, n_classes: int) -> Dims:
        return Dims(d_x=d_x, d_c=self.d_c, d_h=self.d_h, hidden=self.hidden, n_classes=n_classes)

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **kw})

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochStats:
    epoch: int
    cls_loss: float
    fxts_loss: float
    train_err: float
    test_err: float
    violation_rate: float
    wall_time: float


@dataclass
class TrainReport:
    mode: str
    epochs: list[EpochStats] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for e in self.epochs:
                w.writerow([e.epoch] + [f"{getattr(e, c):.17g}" for c in REPORT_COLUMNS[1:]])

    @property
    def final(self) -> EpochStats | None:
        return self.epochs[-1] if self.epochs else None


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators derived from one master seed."""
    names = ("init", "batching", "perturbation", "attack")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def optimizer_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], lr: float) -> list[np.ndarray]:
    """Per-tensor normalized update theta <- theta - lr * ||theta|| / (||g|| + 1e-12) * g."""
    out = []
    for theta, g in zip(params, grads):
        if g is None:
            out.append(theta.copy())
            continue
        scale = lr * np.linalg.norm(theta) / (np.linalg.norm(g) + 1e-12)
        out.append(theta - scale * g)
    return out


def predict_labels(params: ModelParams, X: np.ndarray, solver: SolverConfig) -> np.ndarray:
    _, logits = forward(X, params, solver)
    return np.argmax(logits.data, axis=-1)


def error_rate(params: ModelParams, X: np.ndarray, y: np.ndarray, solver: SolverConfig) -> float:
    return float(np.mean(predict_labels(params, X, solver) != y))


def _prepare(cfg: TrainConfig, data) -> Split:
    if isinstance(data, Split):
        return data
    return split_and_batch(data, cfg.train_frac, cfg.batch, seed=cfg.seed)


def train(cfg: TrainConfig, data, mode: str = "fxts", params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Shared loop; ``mode`` is "fxts" (robust FxTS training) or "baseline"."""
    if mode not in ("fxts", "baseline"):
        raise ValueError(f"unknown mode {mode!r}")
    split = _prepare(cfg, data)
    streams = seed_streams(cfg.seed)
    if params is None:
        params = ModelParams.init(cfg.dims(split.train), seed=cfg.seed, rng=streams["init"])
    batch_seed = int(streams["batching"].integers(2**63))
    pert_rng = streams["perturbation"]
    split = Split(split.train, split.test, cfg.batch, batch_seed)
    solver, fx, pcfg = cfg.solver, cfg.fxts, cfg.perturbation
    report = TrainReport(mode=mode)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        cls_sum = fx_sum = 0.0
        viol, n_batches = [], 0
        for xb, yb in split.batches(epoch):
            P = params.as_tensors()
            try:
                xc = extract_features(Tensor(xb), P.phi)
                traj, logits = forward_features(xc, P, solver)
                ce = ad.scale(ad.tsum(ad.softmax_cross_entropy(logits, yb)), 1.0 / len(yb))
                total = ce
                if mode == "fxts":
                    anchors = optimal_state(traj.end.data, yb, params.psi, cfg.eta2, cfg.n_inner)
                    res = fxts_loss(xc, P.f, anchors, pcfg, fx, solver, pert_rng, params.dims.d_h)
                    if cfg.lam > 0:
                        total = ce + cfg.lam * res.loss
                    fx_sum += float(res.loss.data)
                    viol.append(res.violation_rate)
            except SolverError as exc:
                raise TrainingDiverged(epoch, str(exc)) from None
            if not np.isfinite(total.data):
                raise TrainingDiverged(epoch)
            total.backward()
            new = optimizer_step(params.arrays(), [t.grad for t in P.arrays()], cfg.lr)
            params = params.replace(new)
            cls_sum += float(ce.data)
            n_batches += 1
        stats = EpochStats(
            epoch=epoch,
            cls_loss=cls_sum / max(n_batches, 1),
            fxts_loss=fx_sum / max(n_batches, 1),
            train_err=error_rate(params, split.train.X, split.train.y, solver),
            test_err=error_rate(params, split.test.X, split.test.y, solver),
            violation_rate=float(np.mean(viol)) if viol else 0.0,
            wall_time=time.perf_counter() - t0,
        )
        report.epochs.append(stats)
        log.info("%s epoch %d: cls %.4f fxts %.4f train_err %.4f test_err %.4f viol %.3f (%.1fs)",
                 mode, epoch, stats.cls_loss, stats.fxts_loss, stats.train_err, stats.test_err,
                 stats.violation_rate, stats.wall_time)
    return params, report


def train_fxts(cfg: TrainConfig, data, params: ModelParams | None = None):
    return train(cfg, data, "fxts", params)


def train_baseline(cfg: TrainConfig, data, params: ModelParams | None = None):
    return train(cfg, data, "baseline", params)


@dataclass
class FxtsDiagnostics:
    violation_rate: float
    lyapunov: np.ndarray  # (n, knots + 1) V(h(t_i)) on clean trajectories
    pointwise: np.ndarray

    @property
    def nonincreasing_fraction(self) -> float:
        return float(np.mean(np.all(np.diff(self.lyapunov, axis=1) <= 0, axis=1)))


def fxts_diagnostics(params: ModelParams, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                     rng: np.random.Generator) -> FxtsDiagnostics:
    """Violation rate on sampled (h, t) and V along clean trajectories for a labelled set.

    Samples are drawn exactly as in training: anchors from the clean end states,
    ``cfg.n_delta`` perturbed trajectories per input (clean ones if zero).
    """
    xc = extract_features(X, params.phi)
    traj, _ = forward_features(xc, params, cfg.solver)
    anchors = optimal_state(traj.end.data, y, params.psi, cfg.eta2, cfg.n_inner)
    V = np.stack([lyapunov_value(h.data, anchors) for h in traj.states], axis=1)
    if cfg.n_delta == 0:
        rows, anchors_rep = xc, anchors
    else:
        rows = sample_perturbations(xc, cfg.perturbation, rng)
        anchors_rep = anchors.repeat(cfg.n_delta)
    terms = knot_losses(rows, params.f, anchors_rep, cfg.fxts, cfg.solver, params.dims.d_h)
    values = np.stack([t.data for t in terms], axis=-1)
    return FxtsDiagnostics(float(np.mean(values > VIOLATION_THRESHOLD)), V, values)
