"""Data-controlled Neural ODE: input map phi, vector field f, output map psi.

    x_c = phi(x),   dh/dt = f(t, x_c, h),   logits = psi(h(1)),   h(0) = 0.

Parameters live in ``ModelParams`` as plain numpy arrays, grouped per map as
alternating ``[W0, b0, W1, b1, ...]`` lists.  Forward functions accept either
arrays or autodiff tensors for those lists.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ode import SolverConfig, Trajectory, integrate_trajectory

FORMAT_VERSION = 1
GROUPS = ("phi", "f", "psi")


@dataclass(frozen=True)
class Dims:
    d_x: int = 2
    d_c: int = 16
    d_h: int = 16
    hidden: int = 32
    n_classes: int = 2

    def __post_init__(self):
        if self.d_h < 2:
            raise ValueError("d_h must be >= 2")
        if min(self.d_x, self.d_c, self.hidden, self.n_classes) < 1:
            raise ValueError(f"invalid dims {self}")

    def layer_shapes(self) -> dict[str, list[tuple[int, int]]]:
        """(out, in) weight shapes for each parameter group."""
        d, w = self, self.hidden
        return {
            "phi": [(w, d.d_x), (d.d_c, w)],
            "f": [(w, d.d_h + d.d_c + 1), (w, w), (d.d_h, w)],
            "psi": [(d.n_classes, d.d_h)],
        }


@dataclass
class ModelParams:
    dims: Dims
    seed: int
    phi: list[np.ndarray] = field(default_factory=list)
    f: list[np.ndarray] = field(default_factory=list)
    psi: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, dims: Dims, seed: int = 0, rng: np.random.Generator | None = None) -> "ModelParams":
        """Uniform(-a, a) weights and biases with a = 1/sqrt(fan_in)."""
        rng = np.random.default_rng(seed) if rng is None else rng
        groups = {}
        for name, shapes in dims.layer_shapes().items():
            arrays = []
            for out, fan_in in shapes:
                a = 1.0 / np.sqrt(fan_in)
                arrays.append(rng.uniform(-a, a, size=(out, fan_in)))
                arrays.append(rng.uniform(-a, a, size=(out,)))
            groups[name] = arrays
        return cls(dims=dims, seed=seed, **groups)

    @classmethod
    def zeros(cls, dims: Dims, seed: int = 0) -> "ModelParams":
        groups = {
            name: [a for out, fan_in in shapes for a in (np.zeros((out, fan_in)), np.zeros(out))]
            for name, shapes in dims.layer_shapes().items()
        }
        return cls(dims=dims, seed=seed, **groups)

    def arrays(self) -> list[np.ndarray]:
        return [*self.phi, *self.f, *self.psi]

    def names(self) -> list[str]:
        return [f"{g}.{i}" for g in GROUPS for i in range(len(getattr(self, g)))]

    def replace(self, arrays: Sequence[np.ndarray]) -> "ModelParams":
        arrays = list(arrays)
        n_phi, n_f = len(self.phi), len(self.f)
        return ModelParams(self.dims, self.seed, arrays[:n_phi], arrays[n_phi:n_phi + n_f], arrays[n_phi + n_f:])

    def as_tensors(self) -> "ModelParams":
        """Same structure with every array wrapped as a gradient-tracking tensor."""
        return self.replace([Tensor(a, requires_grad=True) for a in self.arrays()])

    def copy(self) -> "ModelParams":
        return self.replace([a.copy() for a in self.arrays()])

    def validate(self) -> None:
        shapes = self.dims.layer_shapes()
        for g in GROUPS:
            arrays = getattr(self, g)
            expected = [s for out, fan_in in shapes[g] for s in ((out, fan_in), (out,))]
            got = [a.shape for a in arrays]
            if got != expected:
                raise ValueError(f"{g}: parameter shapes {got} do not match dims (expected {expected})")
            if not all(np.all(np.isfinite(a)) for a in arrays):
                raise ValueError(f"{g}: non-finite weights")

    # checkpoint I/O

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dims": asdict(self.dims),
            "seed": self.seed,
            **{f"theta_{g}": [a.tolist() for a in getattr(self, g)] for g in GROUPS},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelParams":
        if obj.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {obj.get('format_version')!r}")
        dims = Dims(**obj["dims"])
        groups = {g: [np.asarray(a, dtype=np.float64) for a in obj[f"theta_{g}"]] for g in GROUPS}
        params = cls(dims=dims, seed=int(obj["seed"]), **groups)
        params.validate()
        return params

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips float64 exactly
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LipschitzBounds:
    L_phi: float
    L_f: float
    L_psi: float
    L_V: float

    @property
    def composite(self) -> float:
        """L = L_V * L_f * L_phi, the constant multiplying the input perturbation."""
        return self.L_V * self.L_f * self.L_phi


def _lift(a) -> Tensor:
    return a if isinstance(a, Tensor) else Tensor(a)


def mlp(x: Tensor, layers: Sequence) -> Tensor:
    """Affine layers with tanh between them and a linear output."""
    layers = [_lift(a) for a in layers]
    n = len(layers) // 2
    for i in range(n):
        x = ad.matvec(layers[2 * i], x) + layers[2 * i + 1]
        if i < n - 1:
            x = ad.tanh(x)
    return x


def extract_features(x, phi: Sequence) -> Tensor:
    return mlp(_lift(x), phi)


def dynamics(t: float, xc, h, f: Sequence) -> Tensor:
    """dh/dt for a batch of states; time enters as a raw appended scalar."""
    h, xc = _lift(h), _lift(xc)
    tcol = Tensor(np.full(h.shape[:-1] + (1,), float(t)))
    return mlp(ad.concat([h, xc, tcol]), f)


def predict(h, psi: Sequence) -> Tensor:
    return mlp(_lift(h), psi)


def forward(x, params, cfg: SolverConfig = SolverConfig()) -> tuple[Trajectory, Tensor]:
    """Integrate the hidden state from h(0)=0 and return (trajectory, logits at t=1).

    ``params`` may be a ``ModelParams`` holding arrays or, during training, one
    holding gradient-tracking tensors (see ``ModelParams.as_tensors``).
    """
    return forward_features(extract_features(x, params.phi), params, cfg)


def forward_features(xc, params, cfg: SolverConfig = SolverConfig()) -> tuple[Trajectory, Tensor]:
    xc = _lift(xc)
    h0 = Tensor(np.zeros(xc.shape[:-1] + (params.dims.d_h,)))
    traj = integrate_trajectory(lambda t, h: dynamics(t, xc, h, params.f), h0, cfg)
    return traj, predict(traj.end, params.psi)


def spectral_norm(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0 or not np.any(w):
        return 0.0
    return float(np.linalg.norm(w, 2))


def lipschitz_upper(layers: Sequence) -> float:
    """Product of the weight spectral norms (tanh is 1-Lipschitz); biases ignored."""
    weights = [a.data if isinstance(a, Tensor) else a for a in layers[0::2]]
    out = 1.0
    for w in weights:
        out *= spectral_norm(w)
    return out


def dynamics_norm_bound(f: Sequence) -> float:
    """Bound on ||f|| from tanh saturation of the last hidden layer."""
    w_out, b_out = (a.data if isinstance(a, Tensor) else a for a in f[-2:])
    return spectral_norm(w_out) * np.sqrt(w_out.shape[1]) + float(np.linalg.norm(b_out))


def lipschitz_bounds(params: ModelParams, L_V: float) -> LipschitzBounds:
    return LipschitzBounds(
        L_phi=lipschitz_upper(params.phi),
        L_f=lipschitz_upper(params.f),
        L_psi=lipschitz_upper(params.psi),
        L_V=float(L_V),
    )
