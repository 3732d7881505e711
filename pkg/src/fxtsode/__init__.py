"""Fixed-time stable neural ODE classifiers: model, training, settling-time bounds and attacks."""

from .bounds import BoundQuery, bound_I, quadrature_I, simulate_relaxed, solve_v
from .data import Dataset, make_moons, split_and_batch
from .fxts import FxtsParams, fxts_loss, pointwise_loss
from .model import Dims, ModelParams, forward
from .ode import SolverConfig
from .train import TrainConfig, train_baseline, train_fxts

__version__ = "0.1.0"

__all__ = [
    "BoundQuery", "Dataset", "Dims", "FxtsParams", "ModelParams", "SolverConfig", "TrainConfig",
    "bound_I", "forward", "fxts_loss", "make_moons", "pointwise_loss", "quadrature_I",
    "simulate_relaxed", "solve_v", "split_and_batch", "train_baseline", "train_fxts",
]
