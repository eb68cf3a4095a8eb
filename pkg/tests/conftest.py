import numpy as np
import pytest

from rsa_ensemble.linalg import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_dataset(N, K, seed=0, noise=1.0, beta=None):
    g = np.random.default_rng(seed)
    X = g.standard_normal((N, K))
    b = g.standard_normal(K) if beta is None else np.asarray(beta, dtype=float)
    return Dataset(X, X @ b + noise * g.standard_normal(N))
