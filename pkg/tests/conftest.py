import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sofa.core import Dataset
from sofa.query import normalize_query
from sofa.synthetic import generate, split_queries

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# lines reported by the acceptance gate, printed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def corpus(profile, count, n=256, queries=20, seed=0):
    raw = generate(profile, count + queries, n, seed=seed)
    data, qraw = split_queries(raw, queries, seed=seed + 1)
    return Dataset.from_raw(data), np.stack([normalize_query(q) for q in qraw])


@pytest.fixture(scope="session")
def smooth_small():
    return corpus("smooth", 3000, 64, seed=11)


@pytest.fixture(scope="session")
def noisy_small():
    return corpus("noisy", 3000, 64, seed=12)


@pytest.fixture(scope="session")
def walk_small():
    return corpus("random-walk", 3000, 128, seed=13)


@pytest.fixture(scope="session")
def square_mid():
    return corpus("square-wave", 20000, 256, seed=14)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
