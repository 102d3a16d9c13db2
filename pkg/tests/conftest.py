import numpy as np
import pytest

from oars_bench.core import rng_stream
from oars_bench.harness import select_victims
from oars_bench.models import generate_task


@pytest.fixture(scope="session")
def task():
    return generate_task(7)


@pytest.fixture(scope="session")
def victims(task):
    return select_victims(task, 20, 0)


@pytest.fixture
def rng():
    return rng_stream(1234)


def linear_loss(w, b=0.0):
    """Loss with known gradient ``w``."""
    return lambda x: float(np.vdot(w, x) + b)
