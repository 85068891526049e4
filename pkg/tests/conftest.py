from datetime import datetime, timezone

import numpy as np
import pytest

from scourwatch.dataset import WindowFactory
from scourwatch.ingest import regrid_hourly
from scourwatch.preprocess import preprocess_series
from scourwatch.synth import SynthSpec, generate, ground_truth


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(years=2, seed=42)


@pytest.fixture(scope="session")
def small_truth(small_spec):
    return ground_truth(small_spec)


@pytest.fixture(scope="session")
def small_processed(small_spec, small_truth):
    readings, _ = generate(small_spec)
    series, _ = regrid_hourly(readings, small_truth.origin, small_truth.n_steps)
    return preprocess_series(series)


@pytest.fixture(scope="session")
def small_factory(small_processed):
    return WindowFactory(small_processed, test_steps=150 * 24, val_steps=120 * 24)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
