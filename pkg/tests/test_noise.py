import math

import numpy as np
import pytest
from scipy import integrate

from lqteam.noise import FAMILIES, NoiseModel, log_density, sample_noise, sample_projected, tail_envelope
from lqteam.stiefel import sample_stiefel


def _moments_ok(x, k=5.0):
    N, n = x.shape
    mean_ok = np.all(np.abs(x.mean(axis=0)) <= k * x.std(axis=0) / math.sqrt(N))
    cov_ok = True
    for j in range(n):
        prod = x[:, j : j + 1] * x[:, j:]
        target = np.zeros(n - j)
        target[0] = 1.0
        cov_ok &= bool(np.all(np.abs(prod.mean(axis=0) - target) <= k * prod.std(axis=0) / math.sqrt(N)))
    return bool(mean_ok), bool(cov_ok)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [1, 4, 16])
def test_isotropy(family, n):
    rng = np.random.default_rng(100 * FAMILIES.index(family) + n)
    x = sample_noise(NoiseModel(family, n), 1_000_000, rng)
    assert _moments_ok(x) == (True, True)


def test_exp_product_standardised():
    x = sample_noise(NoiseModel("exp_product", 1), 1_000_000, 1)[:, 0]
    assert x.min() > -1.0
    assert abs(x.mean()) < 5 * x.std() / 1000
    assert abs(x.var() - 1) < 5 * (x**2).std() / 1000


def test_cube_support():
    x = sample_noise(NoiseModel("uniform_cube_product", 2), 100_000, 2)
    assert np.all(np.abs(x) <= math.sqrt(3))


def test_ball_support_and_radius():
    m = NoiseModel("uniform_ball", 10)
    x = sample_noise(m, 200_000, 3)
    r = np.linalg.norm(x, axis=1)
    assert r.max() <= math.sqrt(12) + 1e-12
    # radius law: P(|x| <= s rho) = s^n
    assert abs(np.mean(r <= 0.9 * math.sqrt(12)) - 0.9**10) < 5 * math.sqrt(0.9**10 * (1 - 0.9**10) / 200_000)


def test_log_density_examples():
    assert log_density(NoiseModel("gaussian", 2), np.zeros(2)) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)
    assert log_density(NoiseModel("uniform_cube_product", 2), np.array([2.0, 0.0])) == -math.inf
    assert log_density(NoiseModel("exp_product", 1), np.array([-1.5])) == -math.inf
    assert log_density(NoiseModel("uniform_ball", 3), np.array([3.0, 0, 0])) == -math.inf


def test_laplace_density_at_zero_by_quadrature():
    # unnormalised Laplace with scale 1/sqrt(2); normaliser by quadrature
    b = 1 / math.sqrt(2)
    Z, _ = integrate.quad(lambda t: math.exp(-abs(t) / b), -np.inf, np.inf, epsabs=1e-14)
    assert log_density(NoiseModel("laplace_product", 1), np.zeros(1)) == pytest.approx(-math.log(Z), abs=1e-10)
    assert -math.log(Z) == pytest.approx(-0.5 * math.log(2), abs=1e-10)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_density_integrates_to_one(family, n):
    # Monte Carlo-free check for n=1; for n>1 use importance sampling against N(0, 4 I).
    model = NoiseModel(family, n)
    if n == 1:
        lo, hi = (-1, 60) if family == "exp_product" else (-40, 40)
        pts = [-math.sqrt(3), 0.0, math.sqrt(3)]
        total, _ = integrate.quad(lambda t: math.exp(log_density(model, np.array([t]))), lo, hi, points=pts, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)
    else:
        rng = np.random.default_rng(n)
        z = 2.0 * rng.standard_normal((400_000, n))
        log_q = -0.5 * n * math.log(2 * math.pi * 4) - 0.5 * (z**2).sum(axis=1) / 4
        w = np.exp(log_density(model, z) - log_q)
        assert abs(w.mean() - 1) < 5 * w.std() / math.sqrt(len(w))


@pytest.mark.parametrize("family", ["gaussian", "exp_product", "laplace_product", "uniform_cube_product"])
def test_one_dimensional_log_concavity(family):
    model = NoiseModel(family, 1)
    grid = np.linspace(-1.7, 4.0, 2001)[:, None]
    vals = log_density(model, grid)
    ok = np.isfinite(vals)
    v = vals[ok]
    second = v[2:] - 2 * v[1:-1] + v[:-2]
    assert np.all(second <= 1e-9)


def test_envelope_examples_on_grids():
    g = np.linspace(-1, 50, 10_000)[:, None]
    env = tail_envelope(NoiseModel("exp_product", 1))
    assert (env.a, env.b) == (1.0, 1.0)
    assert np.all(log_density(NoiseModel("exp_product", 1), g) <= -np.abs(g[:, 0]) + 1 + 1e-12)

    env = tail_envelope(NoiseModel("gaussian", 1))
    assert env.a == 1.0 and env.b == pytest.approx(0.5 - 0.5 * math.log(2 * math.pi))
    g = np.linspace(-30, 30, 10_000)[:, None]
    assert np.all(log_density(NoiseModel("gaussian", 1), g) <= env.bound(g) + 1e-12)

    env = tail_envelope(NoiseModel("uniform_cube_product", 1))
    assert env.a == 1.0 and env.b == pytest.approx(math.sqrt(3) - 0.5 * math.log(12))
    g = np.linspace(-math.sqrt(3), math.sqrt(3), 10_000)[:, None]
    assert np.all(log_density(NoiseModel("uniform_cube_product", 1), g) <= env.bound(g) + 1e-12)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [1, 3, 10])
def test_envelope_soundness(family, n):
    model = NoiseModel(family, n)
    env = tail_envelope(model)
    assert env.valid and env.a > 0
    rng = np.random.default_rng(n)
    # points from the law itself (where the density is largest) plus wide uniform points
    x = np.vstack([sample_noise(model, 5_000, rng), rng.uniform(-8, 8, (5_000, n))])
    lhs = log_density(model, x)
    assert np.all(lhs <= env.bound(x) + 1e-12)


def test_sample_projected_independent_of_workers():
    m = NoiseModel("laplace_product", 300)
    R = sample_stiefel(300, 3, 0).entries
    a = sample_projected(m, R, 50_000, 5, workers=1)
    b = sample_projected(m, R, 50_000, 5, workers=4)
    assert a.shape == (50_000, 3)
    assert np.array_equal(a, b)


def test_unknown_family():
    with pytest.raises(ValueError):
        NoiseModel("cauchy", 3)
