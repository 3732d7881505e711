"""Flat ``section.key = value`` run configuration with env-var and flag overrides.

Precedence, lowest first: built-in defaults, config file, environment
variables named ``FXTSODE_<SECTION>_<KEY>`` (e.g. ``FXTSODE_TRAIN_EPOCHS=5``),
then ``--set section.key=value`` flags.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .attacks import IMAGE_DOMAIN, SYNTHETIC_DOMAIN
from .data import SYNTHETIC, Dataset, load_idx
from .train import TrainConfig

ENV_PREFIX = "FXTSODE_"


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _words(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _opt_str(text) -> str | None:
    text = str(text).strip()
    return text or None


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[Any], Any], Any]] = {
    "data.name": (str, "moons"),
    "data.n": (int, 2000),
    "data.noise": (float, 0.1),
    "data.seed": (int, 0),
    "data.images": (_opt_str, None),
    "data.labels": (_opt_str, None),
    "data.n_classes": (int, 0),  # 0: infer from labels
    "data.limit": (int, 0),  # 0: use every sample
    "model.d_c": (int, 16),
    "model.d_h": (int, 16),
    "model.hidden": (int, 32),
    "solver.knots": (int, 5),
    "solver.substeps": (int, 4),
    "fxts.alpha1": (float, 10.0),
    "fxts.alpha2": (float, 1.0),
    "fxts.mu": (float, 2.0),
    "train.mode": (str, "fxts"),
    "train.lr": (float, 0.01),
    "train.epochs": (int, 20),
    "train.eta2": (float, 2.0),
    "train.n_inner": (int, 3),
    "train.n_delta": (int, 16),
    "train.radius_max": (float, 1.2),
    "train.lam": (float, 1.0),
    "train.batch": (int, 64),
    "train.seed": (int, 0),
    "train.train_frac": (float, 0.8),
    "attack.kinds": (_words, ("fgsm", "bim", "pgd", "gaussian", "impulse")),
    "attack.eps": (_floats, (0.05, 0.1, 0.2)),
    "attack.sigma": (_floats, (0.1, 0.3)),
    "attack.impulse_p": (_floats, (0.05, 0.1)),
    "attack.steps": (int, 10),
    "attack.seed": (int, 0),
    "output.dir": (str, "runs/default"),
    "sweep.cap": (int, 64),
    "trace.samples": (int, 10),
}

_TRAIN_KEYS = {
    "train.lr": "lr", "train.epochs": "epochs", "train.eta2": "eta2", "train.n_inner": "n_inner",
    "train.n_delta": "n_delta", "train.radius_max": "radius_max", "train.lam": "lam", "train.batch": "batch",
    "train.seed": "seed", "train.train_frac": "train_frac", "solver.knots": "knots",
    "solver.substeps": "substeps", "fxts.alpha1": "alpha1", "fxts.alpha2": "alpha2", "fxts.mu": "mu",
    "model.d_c": "d_c", "model.d_h": "d_h", "model.hidden": "hidden",
}


def _env_key(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def parse_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, value = (part.strip() for part in text.split("=", 1))
    return key, value


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def build(cls, file: str | os.PathLike | None = None, overrides: Iterable[str] = (),
              env: Mapping[str, str] | None = None) -> "RunConfig":
        raw: dict[str, Any] = {}
        if file is not None:
            path = Path(file)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            raw.update(parse_text(path.read_text(), str(path)))
        env = os.environ if env is None else env
        for key in SCHEMA:
            if _env_key(key) in env:
                raw[key] = env[_env_key(key)]
        for item in overrides:
            key, value = parse_assignment(item)
            raw[key] = value
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "RunConfig":
        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = {}
        for key, (parser, default) in SCHEMA.items():
            if key not in raw or raw[key] is None:
                values[key] = default
                continue
            try:
                values[key] = parser(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: cannot parse {raw[key]!r} ({exc})") from None
        cfg = cls(values)
        cfg.validate()
        return cfg

    def replace(self, **updates) -> "RunConfig":
        """Override by dotted key given with ``__`` for the dot, e.g. ``train__seed=1``."""
        merged = dict(self.values)
        for k, v in updates.items():
            merged[k.replace("__", ".")] = v
        return RunConfig.from_mapping(merged)

    def with_values(self, values: Mapping[str, Any]) -> "RunConfig":
        return RunConfig.from_mapping({**self.values, **values})

    def validate(self) -> None:
        name = self["data.name"]
        if name == "idx":
            for key in ("data.images", "data.labels"):
                if self[key] is None:
                    raise ConfigError(f"{key} is required when data.name = idx")
                if not Path(self[key]).is_file():
                    raise ConfigError(f"{key}: file not found: {self[key]}")
        elif name not in SYNTHETIC:
            raise ConfigError(f"data.name must be one of {sorted(SYNTHETIC) + ['idx']}, got {name!r}")
        if self["train.mode"] not in ("fxts", "baseline"):
            raise ConfigError(f"train.mode must be fxts or baseline, got {self['train.mode']!r}")
        kinds = {"fgsm", "bim", "pgd", "gaussian", "impulse"}
        bad = [k for k in self["attack.kinds"] if k not in kinds]
        if bad:
            raise ConfigError(f"attack.kinds: unknown kind(s) {bad}")
        if self["sweep.cap"] < 1 or self["trace.samples"] < 1 or self["attack.steps"] < 1:
            raise ConfigError("sweep.cap, trace.samples and attack.steps must be >= 1")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{field: self[key] for key, field in _TRAIN_KEYS.items()})

    def load_dataset(self) -> Dataset:
        name = self["data.name"]
        if name == "idx":
            k = self["data.n_classes"] or None
            ds = load_idx(self["data.images"], self["data.labels"], n_classes=k, name="idx")
        else:
            try:
                ds = SYNTHETIC[name](n=self["data.n"], noise=self["data.noise"], seed=self["data.seed"])
            except ValueError as exc:
                raise ConfigError(f"data: {exc}") from None
        if self["data.limit"]:
            ds = ds.subset(slice(0, self["data.limit"]))
        return ds

    @property
    def domain(self) -> tuple[float, float]:
        return IMAGE_DOMAIN if self["data.name"] == "idx" else SYNTHETIC_DOMAIN

    def attack_settings(self) -> list[tuple[str, float]]:
        grids = {"fgsm": "attack.eps", "bim": "attack.eps", "pgd": "attack.eps",
                 "gaussian": "attack.sigma", "impulse": "attack.impulse_p"}
        return [(kind, m) for kind in self["attack.kinds"] for m in self[grids[kind]]]

    def canonical(self, exclude: Iterable[str] = ("output.dir",)) -> str:
        skip = set(exclude)
        items = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.values.items() if k not in skip}
        return json.dumps(items, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """Stable hash of every setting that affects results."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def dumps(self) -> str:
        lines = []
        for key, value in self.values.items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            lines.append(f"{key} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"
