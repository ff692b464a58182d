import numpy as np
import pytest

from cloudvet import PointCloud
from cloudvet.shapes import cylinder, fibonacci_sphere


@pytest.fixture(scope="session")
def plane_grid():
    """400 points on the z=0 plane, unit spacing."""
    g = np.arange(20, dtype=np.float64)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(400)])
    return PointCloud(pts, name="plane")


@pytest.fixture(scope="session")
def sphere_cloud():
    """2000 evenly spread points on the unit sphere (deterministic)."""
    return PointCloud(fibonacci_sphere(2000), name="sphere")


@pytest.fixture(scope="session")
def cylinder_side_cloud():
    """2000 points on a cylinder side wall (no caps)."""
    rng = np.random.default_rng(12)
    return PointCloud(cylinder(2000, rng, radius=1.0, height=4.0, caps=False),
                      name="cylinder")


def random_cloud(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return PointCloud(scale * rng.normal(size=(n, 3)), name=f"random-{seed}")
