"""Team specifications, ensemble instances, the quadratic cost, and the
optimal linear (NGL) policy.

Conventions: a noise draw ``xi`` lives in R^n; its projected coordinates
``xhat = R^T xi`` live in R^l with ``l = m + sum(obs_dims)``.  Because
``Z = W R^T``, the cross term is ``S xi = W_0 xhat`` and player ``i``
observes ``y_i = H_i xi = W_i xhat``.  All Monte Carlo code works on
``xhat`` rows.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import DimensionError, SingularSystemError, SpecError
from .noise import sample_projected
from .stiefel import OrthonormalMatrix

MAX_CONDITION = 1e12
RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TeamSpec:
    """Fixed ensemble parameters ``(m, obs_dims, Q, W)``.

    Rows of ``W`` are partitioned as ``W_0`` (``m`` rows) followed by
    ``W_1 .. W_m`` with heights ``obs_dims``.  Construction validates all
    invariants and raises :class:`SpecError` naming the bad field.
    """

    m: int
    obs_dims: tuple
    Q: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        m = self.m
        if not isinstance(m, (int, np.integer)) or m <= 0:
            raise SpecError("m", f"player count must be a positive integer, got {m!r}")
        dims = tuple(int(d) for d in self.obs_dims)
        if len(dims) != m or any(d <= 0 for d in dims):
            raise SpecError("obs_dims", f"need {m} positive observation sizes, got {list(self.obs_dims)}")
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "obs_dims", dims)

        Q = np.array(self.Q, dtype=float)
        if Q.shape != (m, m):
            raise SpecError("Q", f"expected shape ({m}, {m}), got {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise SpecError("Q", "contains non-finite entries")
        if np.abs(Q - Q.T).max() > 1e-12 * max(1.0, np.abs(Q).max()):
            raise SpecError("Q", "matrix is not symmetric")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0:
            raise SpecError("Q", f"matrix is not positive definite (smallest eigenvalue {eig[0]:.3g})")
        if eig[-1] / eig[0] > MAX_CONDITION:
            raise SpecError("Q", f"condition number {eig[-1] / eig[0]:.3g} exceeds {MAX_CONDITION:g}")

        ell = m + sum(dims)
        W = np.array(self.W, dtype=float)
        if W.shape != (ell, ell):
            raise SpecError("W", f"expected shape ({ell}, {ell}) for l = m + sum(obs_dims), got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise SpecError("W", "contains non-finite entries")
        Q.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "W", W)
        for i, block in enumerate(self.W_blocks, start=1):
            sv = np.linalg.svd(block, compute_uv=False)
            if sv.min() <= RANK_TOL:
                raise SpecError("W", f"observation block W_{i} is not of full row rank")

    @property
    def ell(self):
        return self.m + sum(self.obs_dims)

    @property
    def ell_bar(self):
        return sum(self.obs_dims)

    @property
    def offsets(self):
        """Row offsets of ``W_1 .. W_m`` inside ``W``."""
        out = [self.m]
        for d in self.obs_dims[:-1]:
            out.append(out[-1] + d)
        return out

    @property
    def W0(self):
        return self.W[: self.m]

    @property
    def W_blocks(self):
        return [self.W[o : o + d] for o, d in zip(self.offsets, self.obs_dims)]

    @cached_property
    def _q_chol(self):
        return linalg.cho_factor(self.Q)

    @cached_property
    def Q_inv(self):
        return linalg.cho_solve(self._q_chol, np.eye(self.m))

    def split(self, xhat):
        """Cross-term signal ``W_0 xhat`` and per-player observations."""
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        if xhat.shape[1] != self.ell:
            raise DimensionError(f"projected noise has dimension {xhat.shape[1]}, expected {self.ell}")
        s = xhat @ self.W0.T
        obs = [xhat @ b.T for b in self.W_blocks]
        return s, obs

    def loss(self, u, s):
        """Per-row cost given actions ``u`` and cross-term signal ``s = S xi``.

        Evaluated as ``1/2 (u + Q^-1 s)^T Q (u + Q^-1 s)``, which expands to
        ``1/2 u^T Q u + u^T s + 1/2 s^T Q^-1 s`` and cannot go negative by
        cancellation.
        """
        u = np.atleast_2d(u)
        d = u + s @ self.Q_inv
        return 0.5 * np.einsum("ij,jk,ik->i", d, self.Q, d)

    def to_dict(self):
        return {
            "m": self.m,
            "obs_dims": list(self.obs_dims),
            "Q": self.Q.tolist(),
            "W": self.W.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(m=d["m"], obs_dims=tuple(d["obs_dims"]), Q=d["Q"], W=d["W"])
        except KeyError as exc:
            raise SpecError(exc.args[0], "missing field") from None


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One ensemble member: ``Z = [S; H_1; ...; H_m] = W R^T``."""

    spec: TeamSpec
    n: int
    R: OrthonormalMatrix
    S: np.ndarray
    H: tuple

    @property
    def Z(self):
        return np.vstack([self.S, *self.H])

    def sample_projected(self, noise, count, rng, workers=1):
        if noise.n != self.n:
            raise DimensionError(f"noise dimension {noise.n} != instance dimension {self.n}")
        return sample_projected(noise, self.R.entries, count, rng, workers)


def build_instance(spec, n, R):
    """Instance with ``S`` = first ``m`` rows of ``W R^T`` and ``H_i`` the rest."""
    R = R if isinstance(R, OrthonormalMatrix) else OrthonormalMatrix(R)
    n = int(n)
    if n < spec.ell:
        raise DimensionError(f"n={n} is smaller than l={spec.ell}")
    if R.entries.shape != (n, spec.ell):
        raise DimensionError(f"R has shape {R.entries.shape}, expected ({n}, {spec.ell})")
    Z = spec.W @ R.T
    S = Z[: spec.m].copy()
    H = []
    for o, d in zip(spec.offsets, spec.obs_dims):
        h = Z[o : o + d].copy()
        if np.linalg.svd(h, compute_uv=False).min() <= RANK_TOL:
            raise SpecError("W", "derived observation matrix is row-rank deficient")
        h.setflags(write=False)
        H.append(h)
    S.setflags(write=False)
    return ProblemInstance(spec=spec, n=n, R=R, S=S, H=tuple(H))


def cost(instance, u, xi):
    """``L(u, xi) = 1/2 u^T Q u + u^T S xi + q(xi)``, ``q(xi) = 1/2 xi^T S^T Q^-1 S xi``.

    Accepts single vectors (returns a float) or matching rows.
    """
    spec = instance.spec
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    single = u.ndim == 1 and xi.ndim == 1
    u2, x2 = np.atleast_2d(u), np.atleast_2d(xi)
    if u2.shape[1] != spec.m:
        raise DimensionError(f"u has dimension {u2.shape[1]}, expected m={spec.m}")
    if x2.shape[1] != instance.n:
        raise DimensionError(f"xi has dimension {x2.shape[1]}, expected n={instance.n}")
    out = spec.loss(u2, x2 @ instance.S.T)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class LinearPolicy:
    """``u_i = gains[i]^T y_i``."""

    gains: tuple

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple(np.asarray(g, dtype=float).reshape(-1) for g in self.gains))

    @property
    def flat(self):
        return np.concatenate(self.gains)

    @classmethod
    def from_flat(cls, gamma, obs_dims):
        gamma = np.asarray(gamma, dtype=float)
        cuts = np.cumsum(obs_dims)[:-1]
        return cls(tuple(np.split(gamma, cuts)))

    @classmethod
    def zero(cls, obs_dims):
        return cls(tuple(np.zeros(d) for d in obs_dims))

    def actions(self, obs):
        if len(obs) != len(self.gains):
            raise DimensionError(f"{len(obs)} observation blocks for {len(self.gains)} players")
        return np.column_stack([y @ g for y, g in zip(obs, self.gains)])


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    stderr: float
    samples: int

    @classmethod
    def from_samples(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, int(n))

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples}


@dataclass(frozen=True, eq=False)
class NGLSystem:
    """Normal equations ``M gamma = -b`` of the linear-policy problem."""

    M: np.ndarray
    b: np.ndarray
    const: float

    def objective(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        return float(0.5 * gamma @ self.M @ gamma + gamma @ self.b + self.const)


def ngl_system(spec):
    """Assemble ``M_ij = Q_ij W_i W_j^T`` and ``b_i = W_i (W_0)_i^T``.

    These are the isotropic expectations ``E[H(xi) Q H(xi)^T]`` and
    ``E[H(xi) S xi]``; neither depends on ``R`` or ``n``.
    """
    blocks = spec.W_blocks
    rows = []
    for i, wi in enumerate(blocks):
        rows.append([spec.Q[i, j] * (wi @ wj.T) for j, wj in enumerate(blocks)])
    M = np.block(rows)
    b = np.concatenate([wi @ spec.W0[i] for i, wi in enumerate(blocks)])
    const = 0.5 * float(np.trace(spec.Q_inv @ spec.W0 @ spec.W0.T))
    return NGLSystem(M=M, b=b, const=const)


def solve_linear(spec):
    """Unique optimal linear policy for ``spec`` (identical for every ``n``, ``R``)."""
    sys_ = ngl_system(spec)
    try:
        cond = np.linalg.cond(sys_.M)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(f"linear-policy system is singular (condition number {cond:.3g})")
    try:
        gamma = linalg.cho_solve(linalg.cho_factor(sys_.M), -sys_.b)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"linear-policy system is not positive definite: {exc}") from None
    return LinearPolicy.from_flat(gamma, spec.obs_dims)


def gaussian_cost(spec):
    """``J(gamma_G; zeta)``, the cost of the optimal linear policy under any isotropic noise."""
    sys_ = ngl_system(spec)
    gamma = solve_linear(spec).flat
    return max(sys_.objective(gamma), 0.0)


def policy_losses(spec, policy, xhat):
    """Per-sample cost of ``policy`` at projected noise rows ``xhat``."""
    s, obs = spec.split(xhat)
    return spec.loss(policy.actions(obs), s)


def mc_cost(instance, policy, noise, samples, rng, workers=1):
    """Monte Carlo estimate of ``J(policy; xi)`` with standard error."""
    xhat = instance.sample_projected(noise, samples, rng, workers)
    return EstimateWithError.from_samples(policy_losses(instance.spec, policy, xhat))
