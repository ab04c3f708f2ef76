from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:4].rstrip(" ]"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 60-sample synthetic-digit dataset, shared by pipeline tests."""
    from speckle_interp.pipeline.config import DatasetConfig
    from speckle_interp.pipeline.dataset import generate_dataset

    root = tmp_path_factory.mktemp("small") / "dataset"
    cfg = DatasetConfig(count=60, test_count=12, base_seed=3, size=32, pad_factor=4,
                        calibration_trials=8, digits="synthetic")
    return generate_dataset(cfg, root)
