import numpy as np
import pytest

from uflkit.geometry import PointSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def line(*positions) -> PointSet:
    return PointSet(np.asarray(positions, dtype=np.float64)[:, None])


def random_points(rng, n, d=2, scale=1.0) -> PointSet:
    return PointSet(rng.random((n, d)) * scale)
