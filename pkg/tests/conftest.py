import numpy as np
import pytest

from srpc import Dataset


def make_dataset(rng, n=30, p=3, S=2, d=3, q=0):
    """Random valid dataset; subpopulations are balanced and contiguous."""
    reps = [n // S + (1 if i < n % S else 0) for i in range(S)]
    s = np.repeat(np.arange(1, S + 1), reps)
    x = rng.integers(1, d + 1, (n, p))
    # ensure every level occurs somewhere so inferred d matches
    for j in range(p):
        x[: d, j] = np.arange(1, d + 1)
    y = rng.integers(0, 2, n)
    w = rng.standard_normal((n, q))
    return Dataset(
        x=x, s=s, y=y, w_dem=w, d=np.full(p, d, dtype=np.int64),
        S=S, n=n, p=p,
    ).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
