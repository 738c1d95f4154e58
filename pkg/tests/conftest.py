import numpy as np
import pytest

from lqteam.team import TeamSpec

# Fixed spec used by the gap-decay checks: m=2 scalar observers, coupled Q,
# full-rank W.
GAP_Q = [[2.0, 1.0], [1.0, 2.0]]
GAP_W = [
    [1.0, 0.5, 0.8, -0.3],
    [0.2, 1.0, -0.4, 0.9],
    [0.9, 0.3, 0.6, 0.1],
    [-0.2, 0.8, 0.1, 0.7],
]


def random_spd(rng, m, cond_max=100.0):
    u, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = np.exp(rng.uniform(0.0, np.log(cond_max), m))
    lam[0] = 1.0
    q = (u * lam) @ u.T
    return 0.5 * (q + q.T)


def random_spec(rng, m=None, dims=None, cond_max=100.0, w_cond_max=1e3):
    """Random valid spec; W is redrawn until reasonably conditioned."""
    m = m if m is not None else int(rng.integers(1, 4))
    dims = tuple(dims) if dims is not None else tuple(int(d) for d in rng.integers(1, 3, m))
    ell = m + sum(dims)
    while True:
        W = rng.standard_normal((ell, ell))
        if np.linalg.cond(W) < w_cond_max:
            return TeamSpec(m, dims, random_spd(rng, m, cond_max), W)


@pytest.fixture
def gap_spec():
    return TeamSpec(2, (1, 1), GAP_Q, GAP_W)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
