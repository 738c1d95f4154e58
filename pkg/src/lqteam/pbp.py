"""Person-by-person (PBP) iteration for the nonlinear team optimum.

Policies are piecewise constant on equal-probability bins of each player's
observation.  One sweep updates every player in turn with the stationarity
condition

    u_i(cell) = -(sum_{j != i} Q_ij E[u_j | cell] + E[s_i | cell]) / Q_ii,

where ``s = S xi`` and the conditional expectations are cell averages over a
fixed Monte Carlo sample.  On that sample this is exact block-coordinate
descent on a convex quadratic, so the empirical cost never increases.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._random import as_generator, chunked_map
from .errors import ConvergenceError, DimensionError
from .team import EstimateWithError, gaussian_cost, policy_losses


@dataclass(frozen=True)
class PbpConfig:
    bins: int = 64
    samples: int = 200_000
    max_iters: int = 200
    damping: float = 1.0
    tol: float | None = None  # None -> 1e-4 * (1 + gaussian_cost)
    bins_2d: int = 24  # per-axis bins for two-dimensional observations

    def __post_init__(self):
        if self.bins < 1 or self.bins_2d < 1:
            raise ValueError("bins must be positive")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")

    def resolve_tol(self, spec):
        return self.tol if self.tol is not None else 1e-4 * (1.0 + gaussian_cost(spec))

    def bins_for(self, dim):
        if dim == 1:
            return self.bins
        if dim == 2:
            return self.bins_2d
        raise DimensionError(f"grid policies support observation dimension <= 2, got {dim}")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class PbpTrace:
    """Per-sweep diagnostics of a PBP run (costs are on the training sample)."""

    costs: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    converged: bool = False
    tol: float = math.nan

    @property
    def iterations(self):
        return len(self.changes)


def quantile_edges(y, bins):
    """Strictly increasing edges of ``bins`` equal-probability bins of ``y``.

    Outer edges are the sample extremes.  Ties (atoms) merge bins.
    """
    y = np.asarray(y, dtype=float)
    edges = np.unique(np.quantile(y, np.linspace(0.0, 1.0, bins + 1)))
    if edges.size < 2:
        edges = np.array([edges[0] - 0.5, edges[0] + 0.5])
    return edges


@dataclass(eq=False)
class TabulatedPolicy:
    """Piecewise-constant per-player policies on rectangular grids.

    ``edges[i]`` holds one edge array per observation coordinate of player
    ``i``; ``values[i]`` has shape ``(B_1, ..., B_d)``.  Observations outside
    the grid are clamped to the nearest boundary cell.
    """

    edges: list
    values: list
    trace: PbpTrace | None = None

    def __post_init__(self):
        self.edges = [tuple(np.asarray(e, dtype=float) for e in ed) for ed in self.edges]
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        for ed, v in zip(self.edges, self.values):
            if len(ed) > 2:
                raise DimensionError("grid policies support observation dimension <= 2")
            if v.shape != tuple(e.size - 1 for e in ed):
                raise DimensionError(f"values shape {v.shape} does not match edges")
            for e in ed:
                if np.any(np.diff(e) <= 0):
                    raise ValueError("bin edges must be strictly increasing")

    @property
    def m(self):
        return len(self.values)

    def cell_index(self, i, y):
        """Flat cell index of each row of ``y`` for player ``i``."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        ed = self.edges[i]
        if y.shape[1] != len(ed):
            raise DimensionError(f"player {i} observes dimension {len(ed)}, got {y.shape[1]}")
        idx = np.zeros(y.shape[0], dtype=np.intp)
        for k, e in enumerate(ed):
            idx = idx * (e.size - 1) + np.searchsorted(e[1:-1], y[:, k], side="right")
        return idx

    def actions(self, obs):
        if len(obs) != self.m:
            raise DimensionError(f"{len(obs)} observation blocks for {self.m} players")
        return np.column_stack([self.values[i].ravel()[self.cell_index(i, y)] for i, y in enumerate(obs)])

    def cell_centers(self, i):
        """Midpoints of player ``i``'s cells, rows in flat-index order."""
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges[i]]
        grid = np.meshgrid(*mids, indexing="ij")
        return np.column_stack([g.ravel() for g in grid])


def _grid(obs, cfg, mask=None):
    edges, cells, sizes = [], [], []
    for y in obs:
        d = y.shape[1]
        ref = y if mask is None else y[mask]
        ed = tuple(quantile_edges(ref[:, k], cfg.bins_for(d)) for k in range(d))
        idx = np.zeros(y.shape[0], dtype=np.intp)
        for k, e in enumerate(ed):
            idx = idx * (e.size - 1) + np.searchsorted(e[1:-1], y[:, k], side="right")
        edges.append(ed)
        cells.append(idx)
        sizes.append(int(np.prod([e.size - 1 for e in ed])))
    return edges, cells, sizes


def _iterate(spec, cells, sizes, s, cfg, tol, weight=None):
    """Gauss-Seidel PBP sweeps; returns per-player cell values and a trace."""
    Q = spec.Q
    m = spec.m
    N = s.shape[0]
    w = np.ones(N) if weight is None else np.asarray(weight, dtype=float)
    mass = [np.bincount(c, weights=w, minlength=k) for c, k in zip(cells, sizes)]
    signal = [np.bincount(cells[i], weights=w * s[:, i], minlength=sizes[i]) for i in range(m)]
    occupied = [ms > 0 for ms in mass]
    values = [np.zeros(k) for k in sizes]
    u = np.zeros((N, m))
    trace = PbpTrace(tol=tol)
    for _ in range(cfg.max_iters):
        change = 0.0
        for i in range(m):
            others = u @ Q[i] - Q[i, i] * u[:, i]
            num = np.bincount(cells[i], weights=w * others, minlength=sizes[i]) + signal[i]
            target = values[i].copy()
            occ = occupied[i]
            target[occ] = -num[occ] / (Q[i, i] * mass[i][occ])
            new = (1.0 - cfg.damping) * values[i] + cfg.damping * target
            change = max(change, float(np.abs(new - values[i]).max()))
            values[i] = new
            u[:, i] = new[cells[i]]
        trace.changes.append(change)
        trace.costs.append(float(np.mean(w * spec.loss(u, s))))
        if change < tol:
            trace.converged = True
            break
    return values, trace


def _finish(edges, values, trace):
    shaped = [v.reshape(tuple(e.size - 1 for e in ed)) for ed, v in zip(edges, values)]
    policy = TabulatedPolicy(edges, shaped, trace)
    if not trace.converged and trace.changes[-1] > 10 * trace.tol:
        raise ConvergenceError(
            f"PBP did not converge in {trace.iterations} sweeps (last change {trace.changes[-1]:.3g})",
            trace.changes[-1],
            policy,
        )
    return policy


def pbp_solve(instance, noise, cfg=None, rng=None, workers=1):
    """Approximate the optimal team policy for ``instance`` under ``noise``.

    Raises :class:`ConvergenceError` (carrying the partial policy) when
    ``max_iters`` is reached with a sweep change above ``10 * tol``.
    """
    cfg = cfg or PbpConfig()
    spec = instance.spec
    for d in spec.obs_dims:
        cfg.bins_for(d)
    tol = cfg.resolve_tol(spec)
    xhat = instance.sample_projected(noise, cfg.samples, as_generator(rng), workers)
    s, obs = spec.split(xhat)
    edges, cells, sizes = _grid(obs, cfg)
    values, trace = _iterate(spec, cells, sizes, s, cfg, tol)
    return _finish(edges, values, trace)


def _gaussian_rows(count, dim, rng, workers):
    return chunked_map(lambda size, g: g.standard_normal((size, dim)), count, dim, rng, workers)


def truncated_gaussian_value(spec, trunc_radius, cfg=None, rng=None, workers=1, return_policy=False):
    """Estimate ``v(t) = min_gamma E[1{|zeta| <= t} L(gamma, zeta)]``, ``zeta ~ N(0, I_l)``.

    The policy is fit by indicator-weighted PBP on one Gaussian sample and its
    cost is estimated on an independent sample of the same size.
    """
    cfg = cfg or PbpConfig()
    t = float(trunc_radius)
    if t < 0:
        raise ValueError("truncation radius must be nonnegative")
    for d in spec.obs_dims:
        cfg.bins_for(d)
    fit_rng, eval_rng = as_generator(rng).spawn(2)
    train = _gaussian_rows(cfg.samples, spec.ell, fit_rng, workers)
    inside = np.linalg.norm(train, axis=1) <= t
    if not inside.any():
        est = EstimateWithError(0.0, 0.0, cfg.samples)
        return (est, None) if return_policy else est
    s, obs = spec.split(train)
    edges, cells, sizes = _grid(obs, cfg, mask=inside)
    values, trace = _iterate(spec, cells, sizes, s, cfg, cfg.resolve_tol(spec), weight=inside)
    policy = _finish(edges, values, trace)

    test = _gaussian_rows(cfg.samples, spec.ell, eval_rng, workers)
    keep = np.linalg.norm(test, axis=1) <= t
    est = EstimateWithError.from_samples(keep * policy_losses(spec, policy, test))
    return (est, policy) if return_policy else est


def brute_force_optimal(instance, noise, bins, samples, rng, workers=1, return_policy=False):
    """Exact optimum over piecewise-constant policies on a fixed partition.

    Solves the full stationarity system of the empirical quadratic in all
    ``m * bins`` cell values at once (no iteration), then estimates its cost
    on an independent sample.  Restricted to ``m <= 2`` and scalar
    observations.
    """
    spec = instance.spec
    if spec.m > 2 or any(d != 1 for d in spec.obs_dims):
        raise DimensionError("brute_force_optimal needs m <= 2 and scalar observations")
    fit_rng, eval_rng = as_generator(rng).spawn(2)
    xhat = instance.sample_projected(noise, samples, fit_rng, workers)
    s, obs = spec.split(xhat)
    cfg = PbpConfig(bins=int(bins), samples=int(samples))
    edges, cells, sizes = _grid(obs, cfg)

    N = xhat.shape[0]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    A = np.zeros((offs[-1], offs[-1]))
    rhs = np.zeros(offs[-1])
    for i in range(spec.m):
        rhs[offs[i] : offs[i + 1]] = -np.bincount(cells[i], weights=s[:, i], minlength=sizes[i]) / N
        for j in range(spec.m):
            joint = np.bincount(cells[i] * sizes[j] + cells[j], minlength=sizes[i] * sizes[j])
            A[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = spec.Q[i, j] * joint.reshape(sizes[i], sizes[j]) / N
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    values = [sol[offs[i] : offs[i + 1]].reshape(tuple(e.size - 1 for e in edges[i])) for i in range(spec.m)]
    policy = TabulatedPolicy(edges, values)

    test = instance.sample_projected(noise, samples, eval_rng, workers)
    est = EstimateWithError.from_samples(policy_losses(spec, policy, test))
    return (est, policy) if return_policy else est
