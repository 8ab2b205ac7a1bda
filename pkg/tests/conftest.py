import numpy as np
import pytest


def rand_pmf(rng, k, sparse=False):
    p = rng.dirichlet(np.full(k, 0.7))
    if sparse and k > 1:
        p[rng.random(k) < 0.3] = 0.0
        if p.sum() == 0:
            p[rng.integers(k)] = 1.0
    return p / p.sum()


def rand_rows(rng, k_in, k_out, sparse=False):
    return np.stack([rand_pmf(rng, k_out, sparse) for _ in range(k_in)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
