"""Shared, lazily trained two-moons models (expensive; built once per session)."""

import time

import numpy as np
import pytest

from fxtsode.data import make_moons, split_and_batch
from fxtsode.train import TrainConfig, train

SEEDS = (0, 1, 2, 3, 4)
EPOCHS = 21  # desk-scale budget: five FxTS runs must fit in 10 CPU minutes


def moons_split(seed: int):
    return split_and_batch(make_moons(2000, 0.1, seed=0), 0.8, 64, seed=seed)


class RunCache:
    """Trained (params, report, split, seconds) per (mode, seed), computed on first use."""

    def __init__(self):
        self.runs = {}

    def get(self, mode: str, seed: int):
        key = (mode, seed)
        if key not in self.runs:
            split = moons_split(seed)
            t0 = time.process_time()
            params, report = train(TrainConfig(epochs=EPOCHS, seed=seed), split, mode)
            self.runs[key] = (params, report, split, time.process_time() - t0)
        return self.runs[key]


@pytest.fixture(scope="session")
def moons_runs():
    return RunCache()


@pytest.fixture(scope="session")
def baseline_model(moons_runs):
    params, _, split, _ = moons_runs.get("baseline", 0)
    return params, split


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
