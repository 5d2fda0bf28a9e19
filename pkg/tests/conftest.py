from __future__ import annotations

import numpy as np
import pytest

from chamferlab import PointCloud


def brute_force_nearest(points: np.ndarray, q: np.ndarray) -> tuple[int, float]:
    """Reference nearest-neighbor scan: first minimum wins ties."""
    diff = points - q
    sq = (diff * diff).sum(axis=1)
    i = int(np.argmin(sq))
    return i, float(np.sqrt(sq[i]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240901)


def random_cloud(rng: np.random.Generator, n: int, dim: int = 3, scale: float = 1.0) -> PointCloud:
    return PointCloud(scale * rng.random((n, dim)))
