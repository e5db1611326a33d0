import numpy as np
import pytest

from declnode import TransportProblem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_transport_problem(rng, b=1, m=4, n=5, gamma=5.0, dtype=np.float64):
    """Seeded problem with non-uniform strictly positive marginals."""
    M = rng.random((b, m, n)).astype(dtype)
    r = (rng.random((b, m)) + 0.5).astype(dtype)
    r /= r.sum(axis=1, keepdims=True)
    c = (rng.random((b, n)) + 0.5).astype(dtype)
    c /= c.sum(axis=1, keepdims=True)
    return TransportProblem(M, r, c, gamma)
