import numpy as np
import pytest

from depthint.grid import GradientField, SparseObservations


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_problem(rng, h, w, density=0.3, confidence=False):
    """Random gradient field, positive observations (>= 1 valid) and optional confidence."""
    mask = rng.random((h, w)) < density
    mask.flat[rng.integers(h * w)] = True
    obs = SparseObservations.from_dense(rng.uniform(1.0, 6.0, (h, w)), mask)
    g = GradientField(rng.normal(0, 0.5, (h, w - 1)), rng.normal(0, 0.5, (h - 1, w)))
    conf = rng.uniform(0.05, 1.0, (h, w)) if confidence else None
    return g, obs, conf
