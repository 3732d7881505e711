"""Fixed-step classical RK4 over [0, 1], unrolled through the autodiff graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor

VectorField = Callable[[float, Tensor], Tensor]


class SolverError(RuntimeError):
    """Non-finite values appeared while integrating (divergent dynamics)."""

    def __init__(self, message: str, knot: int | None = None):
        super().__init__(message if knot is None else f"{message} (knot {knot})")
        self.knot = knot


@dataclass(frozen=True)
class SolverConfig:
    knots: int = 5  # Gamma
    substeps: int = 4

    def __post_init__(self):
        if self.knots < 1 or self.substeps < 1:
            raise ValueError("knots and substeps must be >= 1")
        if self.dt > 0.25:
            raise ValueError(f"step size {self.dt} exceeds 0.25")

    @property
    def dt(self) -> float:
        return 1.0 / (self.knots * self.substeps)

    def times(self) -> np.ndarray:
        # i / Gamma, correctly rounded, so t_0 == 0.0 and t_Gamma == 1.0 exactly
        return np.array([i / self.knots for i in range(self.knots + 1)])


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[Tensor]

    @property
    def end(self) -> Tensor:
        return self.states[-1]

    def values(self) -> np.ndarray:
        """States stacked as ``(knots + 1, ..., d_h)``."""
        return np.stack([s.data for s in self.states])


def _check(x: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise SolverError(f"non-finite {what}")
    return x


def rk4_step(f: VectorField, t: float, h: Tensor, dt: float) -> Tensor:
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = _check(f(t, h), "RK4 stage 1")
    k2 = _check(f(t + 0.5 * dt, h + (0.5 * dt) * k1), "RK4 stage 2")
    k3 = _check(f(t + 0.5 * dt, h + (0.5 * dt) * k2), "RK4 stage 3")
    k4 = _check(f(t + dt, h + dt * k3), "RK4 stage 4")
    return h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_trajectory(f: VectorField, h0, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """States at t_i = i / Gamma, each reached by ``cfg.substeps`` RK4 steps."""
    h = h0 if isinstance(h0, Tensor) else Tensor(h0)
    if not np.all(np.isfinite(h.data)):
        raise SolverError("non-finite initial state", knot=0)
    times = cfg.times()
    n = cfg.knots * cfg.substeps
    dt = cfg.dt
    states = [h]
    for i in range(1, cfg.knots + 1):
        for k in range(cfg.substeps):
            step = (i - 1) * cfg.substeps + k
            try:
                h = rk4_step(f, step / n, h, dt)
            except SolverError as exc:
                raise SolverError(str(exc), knot=i) from None
        states.append(h)
    return Trajectory(times=times, states=states)
