import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ddflow.fields import GridSpec

settings.register_profile("ddflow", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ddflow")

TWO_PI = 2.0 * math.pi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid4():
    return GridSpec(4, (8, 6, 4, 5), (TWO_PI, TWO_PI, TWO_PI, TWO_PI))


@pytest.fixture
def grid4_smooth():
    return GridSpec(4, (16, 16, 4, 4), (TWO_PI,) * 4)


def random_form(rng, grid, p):
    return rng.standard_normal(grid.shape + (math.comb(grid.dim, p),))


def smooth_form(grid, p, seed=0, modes=1):
    """Sum of low cosine modes in every component; resolved on any grid with N >= 8."""
    r = np.random.default_rng(seed)
    x = grid.coords()
    out = np.zeros(grid.shape + (math.comb(grid.dim, p),))
    for k in range(out.shape[-1]):
        for _ in range(modes):
            phase = sum(int(r.integers(-1, 2)) * 2 * math.pi / L * xa for xa, L in zip(x, grid.lengths))
            out[..., k] += r.uniform(0.5, 1.0) * np.cos(phase + r.uniform(0, 2 * math.pi))
    return out
