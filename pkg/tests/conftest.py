"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hemalearn.data import SyntheticConfig, generate_synthetic_lineage


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


MINI_SYNTH = SyntheticConfig(
    genes=300,
    factor_count=8,
    progenitor_count=3000,
    monocyte_count=600,
    lymphocyte_count=300,
    shared_signal_strength=1.0,
    noise_sigma=0.25,
    seed=7,
)


@pytest.fixture(scope="session")
def mini_lineage():
    """Small synthetic world shared by tests that only read it."""
    return generate_synthetic_lineage(MINI_SYNTH)
