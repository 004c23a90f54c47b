import numpy as np
import pytest

from orbitqa.pointcloud import PointCloud


@pytest.fixture
def random_cloud():
    def make(n=50, seed=0, spread=1.0):
        rng = np.random.default_rng(seed)
        return PointCloud(positions=rng.uniform(-spread, spread, size=(n, 3)),
                          colors=rng.uniform(0.0, 1.0, size=(n, 3)))
    return make
