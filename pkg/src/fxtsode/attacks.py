"""Input-space perturbations for robustness evaluation: FGSM, BIM/PGD, Gaussian and impulse noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import ModelParams, forward
from .ode import SolverConfig

SYNTHETIC_DOMAIN = (-3.0, 3.0)
IMAGE_DOMAIN = (0.0, 1.0)
NOISE_KINDS = ("gaussian", "impulse")
ATTACK_KINDS = ("fgsm", "bim", "pgd")


class BallViolation(RuntimeError):
    """An iterate left the epsilon-ball; signals a bug in the projection."""


@dataclass(frozen=True)
class AttackConfig:
    eps: float
    steps: int = 10
    step_size: float | None = None  # defaults to eps / 4
    random_start: bool = False

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")

    @property
    def alpha(self) -> float:
        return self.eps / 4 if self.step_size is None else self.step_size


def loss_and_input_grad(params: ModelParams, x: np.ndarray, y: np.ndarray,
                        solver: SolverConfig = SolverConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy at ``x`` and its gradient with respect to ``x``.

    Samples do not interact, so the gradient of the summed loss gives every
    row its own input gradient.
    """
    xt = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    _, logits = forward(xt, params, solver)
    losses = ad.softmax_cross_entropy(logits, y)
    ad.tsum(losses).backward()
    grad = xt.grad if xt.grad is not None else np.zeros_like(xt.data)
    return losses.data, grad


def cls_losses(params: ModelParams, x: np.ndarray, y: np.ndarray, solver: SolverConfig = SolverConfig()) -> np.ndarray:
    _, logits = forward(x, params, solver)
    return ad.softmax_cross_entropy(logits, y).data


def _clip(x: np.ndarray, domain) -> np.ndarray:
    return np.clip(x, domain[0], domain[1])


def fgsm(params: ModelParams, x: np.ndarray, y: np.ndarray, eps: float,
         solver: SolverConfig = SolverConfig(), domain=SYNTHETIC_DOMAIN) -> np.ndarray:
    """One signed-gradient step of size ``eps``, clipped to the input domain."""
    x = np.asarray(x, dtype=np.float64)
    if eps == 0:
        return x.copy()
    _, g = loss_and_input_grad(params, x, y, solver)
    return _clip(x + eps * np.sign(g), domain)


def pgd(params: ModelParams, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
        solver: SolverConfig = SolverConfig(), domain=SYNTHETIC_DOMAIN,
        rng: np.random.Generator | None = None) -> np.ndarray:
    """Iterated signed-gradient ascent with projection onto the L-inf ball after each step.

    With ``random_start`` the first iterate is drawn uniformly in the ball (then
    clipped to the domain); ``rng`` is required in that case.
    """
    x = np.asarray(x, dtype=np.float64)
    eps = cfg.eps
    if cfg.random_start:
        if rng is None:
            raise ValueError("random_start needs an rng")
        adv = _clip(x + rng.uniform(-eps, eps, size=x.shape), domain)
    else:
        adv = x.copy()
    for _ in range(cfg.steps):
        _, g = loss_and_input_grad(params, adv, y, solver)
        adv = adv + cfg.alpha * np.sign(g)
        adv = _clip(np.clip(adv, x - eps, x + eps), domain)
        if np.max(np.abs(adv - x), initial=0.0) > eps * (1 + 1e-12):
            raise BallViolation(f"iterate left the eps={eps} ball")
    return adv


def bim(params: ModelParams, x: np.ndarray, y: np.ndarray, eps: float, steps: int = 10,
        step_size: float | None = None, solver: SolverConfig = SolverConfig(), domain=SYNTHETIC_DOMAIN) -> np.ndarray:
    """PGD without a random start."""
    return pgd(params, x, y, AttackConfig(eps, steps, step_size, random_start=False), solver, domain)


def corrupt(x: np.ndarray, kind: str, magnitude: float, rng: np.random.Generator, domain=SYNTHETIC_DOMAIN) -> np.ndarray:
    """Gaussian noise of std ``magnitude`` or impulse noise with corruption probability ``magnitude``.

    Impulse noise sets each coordinate to the domain minimum or maximum with
    probability ``magnitude / 2`` each.  Gaussian noise is not clipped.
    """
    x = np.asarray(x, dtype=np.float64)
    if kind == "gaussian":
        if not magnitude >= 0:
            raise ValueError("sigma must be >= 0")
        return x + magnitude * rng.standard_normal(x.shape)
    if kind == "impulse":
        if not 0 <= magnitude <= 1:
            raise ValueError("impulse probability must lie in [0, 1]")
        u = rng.uniform(size=x.shape)
        out = x.copy()
        out[u < magnitude / 2] = domain[0]
        out[(u >= magnitude / 2) & (u < magnitude)] = domain[1]
        return out
    raise ValueError(f"unknown corruption kind {kind!r}; expected one of {NOISE_KINDS}")


def perturb(params: ModelParams, x: np.ndarray, y: np.ndarray, kind: str, magnitude: float,
            rng: np.random.Generator, solver: SolverConfig = SolverConfig(), domain=SYNTHETIC_DOMAIN,
            steps: int = 10) -> np.ndarray:
    """Dispatch on ``kind`` (an attack or a noise family)."""
    if kind == "fgsm":
        return fgsm(params, x, y, magnitude, solver, domain)
    if kind in ("bim", "pgd"):
        if magnitude == 0:
            return np.asarray(x, dtype=np.float64).copy()
        cfg = AttackConfig(magnitude, steps, random_start=kind == "pgd")
        return pgd(params, x, y, cfg, solver, domain, rng)
    return corrupt(x, kind, magnitude, rng, domain)


def error_rows(params: ModelParams, x: np.ndarray, y: np.ndarray, settings: Iterable[tuple[str, float]],
               rng: np.random.Generator, solver: SolverConfig = SolverConfig(), domain=SYNTHETIC_DOMAIN,
               steps: int = 10) -> list[tuple[str, float, float]]:
    """(kind, magnitude, error rate) rows; the clean error always comes first as ("clean", 0)."""
    def err(inputs):
        _, logits = forward(inputs, params, solver)
        return float(np.mean(np.argmax(logits.data, axis=-1) != y))

    rows = [("clean", 0.0, err(x))]
    for kind, magnitude in settings:
        rows.append((kind, float(magnitude), err(perturb(params, x, y, kind, magnitude, rng, solver, domain, steps))))
    return rows
