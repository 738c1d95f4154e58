"""Isotropic log-concave noise laws on R^n.

Every family here has mean zero and identity covariance:

``gaussian``
    standard normal.
``exp_product``
    i.i.d. ``E - 1`` with ``E ~ Exp(1)`` (skewed).
``laplace_product``
    i.i.d. Laplace with scale ``1/sqrt(2)``.
``uniform_cube_product``
    i.i.d. uniform on ``[-sqrt(3), sqrt(3)]``.
``uniform_ball``
    uniform on the centred Euclidean ball of radius ``sqrt(n + 2)``; not a
    product law.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._random import as_generator, chunked_map
from .errors import DimensionError

FAMILIES = (
    "gaussian",
    "exp_product",
    "laplace_product",
    "uniform_cube_product",
    "uniform_ball",
)

_SQRT3 = math.sqrt(3.0)
_LAPLACE_SCALE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class TailEnvelope:
    """Constants with ``log f(x) <= -a * |x| + b`` for all ``x``."""

    a: float
    b: float
    valid: bool = True

    def bound(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -self.a * np.linalg.norm(x, axis=1) + self.b


@dataclass(frozen=True)
class NoiseModel:
    family: str
    n: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; choose from {FAMILIES}")
        if int(self.n) != self.n or self.n <= 0:
            raise DimensionError(f"noise dimension must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def ball_radius(self):
        return math.sqrt(self.n + 2.0)

    def sample(self, count, rng):
        return sample_noise(self, count, rng)

    def log_density(self, x):
        return log_density(self, x)

    def tail_envelope(self):
        return tail_envelope(self)


def _draw(model, count, rng):
    n = model.n
    fam = model.family
    if fam == "gaussian":
        return rng.standard_normal((count, n))
    if fam == "exp_product":
        return rng.standard_exponential((count, n)) - 1.0
    if fam == "laplace_product":
        return rng.laplace(0.0, _LAPLACE_SCALE, (count, n))
    if fam == "uniform_cube_product":
        return rng.uniform(-_SQRT3, _SQRT3, (count, n))
    # uniform_ball: uniform direction times radius * U^(1/n)
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = model.ball_radius * rng.random(count) ** (1.0 / n)
    return g * radius[:, None]


def sample_noise(model, count, rng):
    """``count`` i.i.d. rows drawn from ``model``; returns ``(count, n)``."""
    count = int(count)
    if count <= 0:
        raise ValueError("count must be positive")
    return _draw(model, count, as_generator(rng))


def sample_projected(model, R, count, rng, workers=1):
    """Draw ``count`` noise vectors and return their coordinates ``xi @ R``.

    Sampling runs in fixed-size chunks with spawned child streams so that
    the output is identical for any ``workers``; the full ``(count, n)``
    matrix is never materialised.
    """
    R = np.asarray(R, dtype=float)
    if R.shape[0] != model.n:
        raise DimensionError(f"frame has {R.shape[0]} rows, noise dimension is {model.n}")

    def work(size, gen):
        return _draw(model, size, gen) @ R

    return chunked_map(work, int(count), model.n, rng, workers)


def log_density(model, x):
    """Exact log-density at ``x`` (one vector or rows); ``-inf`` off support."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n = model.n
    if x.shape[1] != n:
        raise DimensionError(f"x has dimension {x.shape[1]}, model has {n}")
    fam = model.family
    if fam == "gaussian":
        out = -0.5 * n * math.log(2 * math.pi) - 0.5 * np.einsum("ij,ij->i", x, x)
    elif fam == "exp_product":
        inside = np.all(x >= -1.0, axis=1)
        out = np.where(inside, -np.sum(x + 1.0, axis=1), -np.inf)
    elif fam == "laplace_product":
        out = -n * math.log(2 * _LAPLACE_SCALE) - np.abs(x).sum(axis=1) / _LAPLACE_SCALE
    elif fam == "uniform_cube_product":
        inside = np.all(np.abs(x) <= _SQRT3, axis=1)
        out = np.where(inside, -n * math.log(2 * _SQRT3), -np.inf)
    else:
        rho = model.ball_radius
        log_vol = 0.5 * n * math.log(math.pi) + n * math.log(rho) - gammaln(0.5 * n + 1)
        inside = np.linalg.norm(x, axis=1) <= rho
        out = np.where(inside, -log_vol, -np.inf)
    return float(out[0]) if single else out


def tail_envelope(model):
    """Exponential envelope ``f(x) <= exp(-a|x| + b)``.

    Derivations per family (``n`` = dimension):

    * gaussian: ``-|x|^2/2 <= -|x| + 1/2``.
    * exp_product: on the support ``sum(x_j + 1) >= |x + 1| >= |x| - sqrt(n)``.
    * laplace_product: ``|x|_1 >= |x|`` with rate ``sqrt(2)``.
    * bounded laws: constant density on a support of radius ``rho`` gives
      ``a = 1, b = rho + log f``.
    """
    n = model.n
    fam = model.family
    if fam == "gaussian":
        return TailEnvelope(1.0, 0.5 - 0.5 * n * math.log(2 * math.pi))
    if fam == "exp_product":
        return TailEnvelope(1.0, math.sqrt(n))
    if fam == "laplace_product":
        return TailEnvelope(1.0 / _LAPLACE_SCALE, -n * math.log(2 * _LAPLACE_SCALE))
    if fam == "uniform_cube_product":
        return TailEnvelope(1.0, _SQRT3 * math.sqrt(n) - n * math.log(2 * _SQRT3))
    rho = model.ball_radius
    log_vol = 0.5 * n * math.log(math.pi) + n * math.log(rho) - gammaln(0.5 * n + 1)
    return TailEnvelope(1.0, rho - float(log_vol))
