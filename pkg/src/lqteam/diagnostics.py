"""Empirical checks of the projection CLT and of the optimality-gap decay."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ._random import as_generator, substream
from .bounds import BoundConstants, fundamental_bounds
from .errors import ConvergenceError
from .noise import NoiseModel, sample_projected
from .pbp import PbpConfig, pbp_solve, truncated_gaussian_value
from .stiefel import sample_stiefel
from .team import EstimateWithError, build_instance, gaussian_cost, policy_losses, solve_linear

MIN_DENSITY_SAMPLES = 1000
PHI_FLOOR = 1e-4


@dataclass(frozen=True)
class DensityReport:
    """Distance of a projected density from the standard Gaussian.

    ``ratio_stderr`` is the Monte Carlo standard error of the KDE ratio at
    the grid point attaining the sup; ``tv_floor`` is the expected histogram
    TV when the sample really is Gaussian (pure sampling noise).
    """

    n: int
    l: int
    grid_sup_ratio_err: float
    tv_estimate: float
    samples: int
    bandwidth: float
    ratio_stderr: float
    tv_floor: float

    def to_dict(self):
        return dict(self.__dict__)


def _log_phi(x):
    return -0.5 * x.shape[1] * math.log(2 * math.pi) - 0.5 * np.einsum("ij,ij->i", x, x)


def _ratio_grid(l, step, radius=2.0):
    ticks = np.arange(-radius, radius + 1e-12, step)
    pts = np.stack(np.meshgrid(*([ticks] * l), indexing="ij"), axis=-1).reshape(-1, l)
    keep = (np.linalg.norm(pts, axis=1) <= radius + 1e-12) & (np.exp(_log_phi(pts)) >= PHI_FLOOR)
    return pts[keep]


def _product_kde(points, x, h, chunk=1 << 15):
    """Gaussian product-kernel density estimate and its per-point standard error."""
    g = points / h
    g2 = np.einsum("ij,ij->i", g, g)
    norm = np.prod(h) * (2 * math.pi) ** (0.5 * points.shape[1])
    s1 = np.zeros(len(points))
    s2 = np.zeros(len(points))
    for start in range(0, x.shape[0], chunk):
        z = x[start : start + chunk] / h
        d2 = g2[:, None] + np.einsum("ij,ij->i", z, z)[None, :] - 2.0 * g @ z.T
        k = np.exp(-0.5 * np.maximum(d2, 0.0)) / norm
        s1 += k.sum(axis=1)
        s2 += (k * k).sum(axis=1)
    N = x.shape[0]
    mean = s1 / N
    var = np.maximum(s2 / N - mean**2, 0.0)
    return mean, np.sqrt(var / N)


def _histogram_tv(x, bins, half_width=4.0):
    N, l = x.shape
    edges = np.linspace(-half_width, half_width, bins + 1)
    inside = np.all(np.abs(x) <= half_width, axis=1)
    idx = np.zeros(N, dtype=np.intp)
    for k in range(l):
        idx = idx * bins + np.clip(np.searchsorted(edges, x[:, k], side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx[inside], minlength=bins**l)
    p_hat = counts / N
    axis_p = np.diff(ndtr(edges))
    p_phi = axis_p
    for _ in range(l - 1):
        p_phi = np.multiply.outer(p_phi, axis_p)
    p_phi = p_phi.ravel()
    out_hat = 1.0 - inside.mean()
    out_phi = max(1.0 - p_phi.sum(), 0.0)
    tv = 0.5 * (np.abs(p_hat - p_phi).sum() + abs(out_hat - out_phi))
    p_all = np.append(p_phi, out_phi)
    floor = 0.5 * np.sum(np.sqrt(2.0 * p_all * (1.0 - p_all) / (math.pi * N)))
    return float(min(tv, 1.0)), float(floor)


def density_report(noise, n, l, samples, rng, workers=1, grid_step=None, hist_bins=16):
    """Project ``samples`` draws of ``noise`` onto a Haar ``l``-frame and compare with N(0, I_l).

    ``noise`` is a family name or a :class:`NoiseModel` of dimension ``n``.
    The sup ratio error is taken over a regular grid (``grid_step``) inside
    the ball of radius 2, skipping points where the Gaussian density is
    below 1e-4.  TV uses ``hist_bins`` per axis over ``[-4, 4]`` plus one
    cell for everything outside.
    """
    if samples < MIN_DENSITY_SAMPLES:
        raise ValueError(f"density_report needs at least {MIN_DENSITY_SAMPLES} samples, got {samples}")
    model = noise if isinstance(noise, NoiseModel) else NoiseModel(noise, n)
    if model.n != n:
        raise ValueError(f"noise dimension {model.n} != n={n}")
    frame_rng, draw_rng = as_generator(rng).spawn(2)
    R = sample_stiefel(n, l, frame_rng)
    x = sample_projected(model, R.entries, samples, draw_rng, workers)

    h = x.std(axis=0, ddof=1) * samples ** (-1.0 / (l + 4))
    pts = _ratio_grid(l, grid_step or (0.25 if l <= 2 else 0.5))
    f_hat, f_se = _product_kde(pts, x, h)
    phi = np.exp(_log_phi(pts))
    err = np.abs(f_hat / phi - 1.0)
    worst = int(np.argmax(err))
    tv, floor = _histogram_tv(x, hist_bins)
    return DensityReport(
        n=int(n),
        l=int(l),
        grid_sup_ratio_err=float(err[worst]),
        tv_estimate=tv,
        samples=int(samples),
        bandwidth=float(h.mean()),
        ratio_stderr=float(f_se[worst] / phi[worst]),
        tv_floor=floor,
    )


def clt_sweep(noise_family, l, n_list, samples, seed, workers=1, **kwargs):
    """One :class:`DensityReport` per ``n``, each on its own ``(seed, n, row)`` stream."""
    return [
        density_report(noise_family, n, l, samples, substream(seed, n, idx), workers, **kwargs)
        for idx, n in enumerate(n_list)
    ]


@dataclass(frozen=True)
class GapSweepRow:
    n: int
    seed: int
    J_linear: EstimateWithError
    J_pbp: EstimateWithError
    gap: float
    gap_paired_stderr: float
    bounds_record: object
    v_t: EstimateWithError
    pbp_iterations: int
    error: str | None = None

    @property
    def combined_stderr(self):
        """Root-sum-square of the two cost standard errors."""
        return math.hypot(self.J_linear.stderr, self.J_pbp.stderr)


def gap_sweep(spec, noise_family, n_list, cfg=None, consts=None, seed=0, workers=1):
    """Linear-vs-PBP cost gap for a fresh Haar instance at every ``n``.

    Row ``k`` draws everything from the ``(seed, n, k)`` stream: the frame,
    the PBP training sample, a common evaluation sample shared by both
    policies, and the truncated-Gaussian value ``v(n^c4)`` used for the
    two-sided bound.  A PBP non-convergence is recorded in ``error``; the
    partial policy is still evaluated, while a failed ``v(t)`` becomes NaN.
    """
    cfg = cfg or PbpConfig()
    consts = consts or BoundConstants()
    linear = solve_linear(spec)
    jg = gaussian_cost(spec)
    rows = []
    for idx, n in enumerate(n_list):
        r_rng, fit_rng, eval_rng, trunc_rng = substream(seed, n, idx).spawn(4)
        inst = build_instance(spec, n, sample_stiefel(n, spec.ell, r_rng))
        noise = NoiseModel(noise_family, n)
        error = None
        try:
            policy = pbp_solve(inst, noise, cfg, fit_rng, workers)
        except ConvergenceError as exc:
            policy, error = exc.policy, str(exc)
        xhat = inst.sample_projected(noise, cfg.samples, eval_rng, workers)
        a = policy_losses(spec, linear, xhat)
        b = policy_losses(spec, policy, xhat)
        j_lin = EstimateWithError.from_samples(a)
        j_pbp = EstimateWithError.from_samples(b)
        diff = EstimateWithError.from_samples(a - b)
        try:
            v_t = truncated_gaussian_value(spec, consts.radius(n), cfg, trunc_rng, workers)
        except ConvergenceError as exc:
            v_t = EstimateWithError(math.nan, math.nan, cfg.samples)
            error = "; ".join(filter(None, [error, f"truncated value: {exc}"]))
        rows.append(
            GapSweepRow(
                n=int(n),
                seed=int(seed),
                J_linear=j_lin,
                J_pbp=j_pbp,
                gap=j_lin.value - j_pbp.value,
                gap_paired_stderr=diff.stderr,
                bounds_record=fundamental_bounds(jg, v_t, n, consts),
                v_t=v_t,
                pbp_iterations=policy.trace.iterations,
                error=error,
            )
        )
    return rows


def tail_mass(instance, noise, policy, k_list, samples, rng, workers=1):
    """``T(k) = E[1{|R^T xi| > k} L]`` for each ``k`` on one common sample."""
    xhat = instance.sample_projected(noise, samples, as_generator(rng), workers)
    losses = policy_losses(instance.spec, policy, xhat)
    radius = np.linalg.norm(xhat, axis=1)
    return [EstimateWithError.from_samples((radius > k) * losses) for k in k_list]
