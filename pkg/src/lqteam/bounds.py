"""Closed-form bound evaluations.

The universal constants of the projection CLT are unknown; everything here
takes them as a :class:`BoundConstants` record and marks outputs computed
with the default ``C = 1`` as illustrative.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaincc, gammaln

from ._random import as_generator, chunked_map
from .team import EstimateWithError, gaussian_cost

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class BoundConstants:
    C: float = 1.0
    c1: float = 0.01
    c2: float = 0.1
    c3: float = 0.01
    c4: float = 0.005
    illustrative: bool = True

    def __post_init__(self):
        for name in ("C", "c1", "c2", "c3", "c4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be positive")

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {"C", "c1", "c2", "c3", "c4"}
        if unknown:
            raise ValueError(f"unknown constants {sorted(unknown)}")
        # A user-supplied C is no longer the placeholder value.
        return cls(**{k: float(v) for k, v in d.items()}, illustrative="C" not in d)

    def to_dict(self):
        return asdict(self)

    def rate(self, n):
        """``C / n^c3``."""
        return self.C * math.exp(-self.c3 * math.log(n))

    def radius(self, n):
        """``n^c4``."""
        return math.exp(self.c4 * math.log(n))


def tail_weight(l, r, t):
    """Mass of ``{|z| > sqrt(3/4) t}`` under ``N(0, I_{l-r})``; zero when ``l == r``."""
    k = int(l) - int(r)
    if k < 0:
        raise ValueError(f"rank r={r} exceeds l={l}")
    if k == 0:
        return 0.0
    return float(gammaincc(0.5 * k, 3.0 * float(t) ** 2 / 8.0))


def matrix_rank_info(W):
    """``(rank, smallest positive singular value)`` at relative tolerance 1e-8."""
    sv = np.linalg.svd(np.asarray(W, dtype=float), compute_uv=False)
    pos = sv[sv > RANK_RTOL * sv[0]]
    return int(pos.size), float(pos.min())


@dataclass(frozen=True)
class GapBound:
    n: int
    leading_term: float
    truncation_term: EstimateWithError
    probability: float
    valid: bool
    tau: float
    rank: int
    sigma_min: float
    radius: float
    constants: BoundConstants

    @property
    def total(self):
        return self.leading_term + self.truncation_term.value

    def to_dict(self):
        d = asdict(self)
        d["truncation_term"] = self.truncation_term.to_dict()
        d["total"] = self.total
        d["illustrative"] = self.constants.illustrative
        return d


def explicit_gap_bound(spec, n, consts, policy, mc_samples, rng, workers=1):
    """Evaluate the explicit optimality-gap bound for problem size ``n``.

    ``leading_term = (C/n^c3 + tau)/(1 - C/n^3 - tau) * J_G`` and the
    truncation term is a Gaussian Monte Carlo estimate of
    ``E[1{W zeta not in A} L(gamma_bar(W zeta), W zeta)]``, where ``A`` bounds
    every block ``|W_i zeta|`` by ``sigma_min n^c4 / (2 sqrt(m+1))`` and
    ``gamma_bar`` zeroes player ``i`` when its own block leaves that radius.
    The record is always returned; ``valid`` reports whether the
    denominator is positive.
    """
    consts = consts or BoundConstants()
    n = int(n)
    r, sigma_min = matrix_rank_info(spec.W)
    tau = tail_weight(spec.ell, r, consts.radius(n))
    denom = 1.0 - consts.C / float(n) ** 3 - tau
    jg = gaussian_cost(spec)
    leading = (consts.rate(n) + tau) / denom * jg if denom != 0 else math.inf
    radius = sigma_min * consts.radius(n) / (2.0 * math.sqrt(spec.m + 1))

    def work(size, gen):
        zeta = gen.standard_normal((size, spec.ell))
        s, obs = spec.split(zeta)
        u = policy.actions(obs)
        outside = np.linalg.norm(s, axis=1) > radius
        for i, y in enumerate(obs):
            far = np.linalg.norm(y, axis=1) > radius
            u[far, i] = 0.0
            outside |= far
        return (outside * spec.loss(u, s))[:, None]

    vals = chunked_map(work, int(mc_samples), spec.ell, as_generator(rng), workers)[:, 0]
    return GapBound(
        n=n,
        leading_term=float(leading),
        truncation_term=EstimateWithError.from_samples(vals),
        probability=1.0 - consts.C * math.exp(-(float(n) ** consts.c2)),
        valid=bool(denom > 0),
        tau=tau,
        rank=r,
        sigma_min=sigma_min,
        radius=radius,
        constants=consts,
    )


@dataclass(frozen=True)
class FundamentalBounds:
    upper: float
    lower: float
    valid: bool
    rate: float

    def to_dict(self):
        return asdict(self)


def fundamental_bounds(J_G, v_t, n, consts=None):
    """Two-sided bracket on the optimal cost at size ``n``.

    ``upper = J_G``; ``lower = v - rho/(1 - rho) J_G`` with ``rho = C/n^c3``.
    Not valid (and ``lower = -inf``) once ``rho >= 1``.
    """
    consts = consts or BoundConstants()
    rho = consts.rate(n)
    v = v_t.value if isinstance(v_t, EstimateWithError) else float(v_t)
    valid = rho < 1.0
    lower = v - rho / (1.0 - rho) * J_G if valid else -math.inf
    return FundamentalBounds(upper=float(J_G), lower=float(lower), valid=valid, rate=rho)


def envelope_budget(a, b, n, l):
    """Largest admissible log-offset ``b_n`` for an ``n``-dimensional envelope.

    ``b_n = b + (n-l) log(a/sqrt(pi)) + lgamma((n-l)/2) - log 2 - lgamma(n-l)``,
    evaluated in log space so that ``n`` up to 1e6 and beyond stays finite.
    """
    k = int(n) - int(l)
    if k <= 0:
        raise ValueError(f"need n > l, got n={n}, l={l}")
    if a <= 0:
        raise ValueError("decay rate a must be positive")
    return float(b + k * (math.log(a) - 0.5 * math.log(math.pi)) + gammaln(0.5 * k) - math.log(2.0) - gammaln(k))


def uniform_density_bound(consts, l, n, a_prime, b_prime):
    """``max(K'/n^c3, exp(-a' n^c4 + b'))`` with ``K' = C / (2 pi)^(l/2)``.

    The guarantee behind it needs ``n >= l^(1/c1)``; the formula itself is
    evaluated for any ``n``.
    """
    consts = consts or BoundConstants()
    k_prime = consts.C / (2.0 * math.pi) ** (0.5 * l)
    poly = k_prime * math.exp(-consts.c3 * math.log(n))
    stretched = math.exp(-a_prime * consts.radius(n) + b_prime)
    return max(poly, stretched)
