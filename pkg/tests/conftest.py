import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planar_cloud():
    """Dense noiseless grid on the plane z = 0 in R^3."""
    g = np.linspace(-1.0, 1.0, 41)
    u, v = np.meshgrid(g, g)
    return np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])


@pytest.fixture(scope="session")
def sphere_points():
    rng = np.random.default_rng(7)
    z = rng.normal(size=(2000, 3))
    return z / np.linalg.norm(z, axis=1, keepdims=True)
