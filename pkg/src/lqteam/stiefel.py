"""Haar sampling on the Stiefel manifold and projection helpers."""

from dataclasses import dataclass

import numpy as np

from ._random import as_generator
from .errors import DimensionError

ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OrthonormalMatrix:
    """An ``n x l`` matrix with orthonormal columns (a point of V_{n,l}).

    The stored array is a read-only copy, so instances can be shared across
    threads.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2:
            raise DimensionError(f"expected a 2-d array, got shape {a.shape}")
        n, l = a.shape
        if l == 0 or n == 0 or l > n:
            raise DimensionError(f"need 0 < l <= n, got n={n}, l={l}")
        err = np.abs(a.T @ a - np.eye(l)).max()
        if err >= ORTHO_TOL:
            raise DimensionError(f"columns are not orthonormal (max |R^T R - I| = {err:.3g})")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def l(self):
        return self.entries.shape[1]

    @property
    def T(self):
        return self.entries.T

    def projector(self):
        """``R R^T``, the orthogonal projector onto the column span."""
        return self.entries @ self.entries.T

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def sample_stiefel(n, l, rng):
    """Draw ``R`` uniformly (Haar) from V_{n,l}.

    Uses the QR factorisation of an ``n x l`` standard Gaussian matrix. The
    columns of ``Q`` are re-signed so that ``R`` in ``G = QR`` has a positive
    diagonal; without that step the law is not rotation invariant.

    Parameters
    ----------
    n, l : int
        Ambient and subspace dimension, ``0 < l <= n``.
    rng : numpy.random.Generator or int
        Random stream (an int is used as a seed).
    """
    n, l = int(n), int(l)
    if n <= 0 or l <= 0:
        raise DimensionError(f"dimensions must be positive, got n={n}, l={l}")
    if l > n:
        raise DimensionError(f"subspace dimension l={l} exceeds n={n}")
    rng = as_generator(rng)
    g = rng.standard_normal((n, l))
    q, r = np.linalg.qr(g, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return OrthonormalMatrix(q * signs)


def canonical_frame(n, l):
    """First ``l`` columns of the identity."""
    return OrthonormalMatrix(np.eye(n, l))


def project_coords(R, x):
    """Coordinates ``R^T x`` of the projection of ``x`` onto span(R).

    ``x`` may be a single length-``n`` vector or an array of row vectors.
    """
    R = R if isinstance(R, OrthonormalMatrix) else OrthonormalMatrix(R)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != R.n:
        raise DimensionError(f"x has trailing dimension {x.shape[-1]}, expected {R.n}")
    return x @ R.entries
