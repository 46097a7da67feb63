import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simplex_scores(rng, n, P):
    return rng.dirichlet(np.ones(P), size=n)


def random_volumes(rng, n, P):
    return rng.multinomial(n, np.ones(P) / P)


def random_bounds(rng, n, P):
    while True:
        L = rng.integers(0, n // P + 2, P)
        U = L + rng.integers(0, n // 2 + 2, P)
        if L.sum() <= n <= U.sum():
            return L, U
