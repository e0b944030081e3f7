"""Brute-force references for the dual LP, used to certify the simplex path.

At an optimum of max alpha.v s.t. |G v|_1 <= 1 at least k-1 entries of G v
vanish on linearly independent rows of G. Enumerating all (k-1)-row subsets,
taking the null direction of each and normalizing it onto the unit l1
sphere therefore visits every candidate vertex.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InstanceTooLarge, RankDeficient
from .estimation import _as_matrix

__all__ = [
    "VertexCertificate",
    "enumerate_dual_vertices",
    "grid_bound_search",
    "random_feasible_beta",
    "MAX_SENSORS",
    "MAX_PARAMS",
]

MAX_SENSORS = 12
MAX_PARAMS = 4
RANK_TOL = 1e-10
ZERO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class VertexCertificate:
    value: float
    v: np.ndarray
    zero_rows: tuple[int, ...]
    subset: tuple[int, ...]


def _null_direction(M: np.ndarray, k: int) -> np.ndarray | None:
    """Unit vector orthogonal to the rows of M, or None if rank(M) < k-1."""
    if M.shape[0] == 0:
        return np.eye(k)[0]
    Q, R, _ = scipy.linalg.qr(M.T, mode="full", pivoting=True)
    scale = np.max(np.abs(M))
    if scale == 0:
        return None
    diag = np.abs(np.diag(R))
    if np.sum(diag > RANK_TOL * scale) < M.shape[0]:
        return None
    return Q[:, -1]


def enumerate_dual_vertices(G, alpha) -> VertexCertificate:
    """Best vertex of the dual problem by exhaustive (k-1)-subset enumeration.

    Row indices in the certificate are 0-based. Among equal values the
    lexicographically first subset wins.
    """
    G = _as_matrix(G)
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    d, k = G.shape
    if d > MAX_SENSORS or k > MAX_PARAMS:
        raise InstanceTooLarge(f"vertex enumeration is limited to d <= {MAX_SENSORS}, k <= {MAX_PARAMS}")
    if d < k or np.linalg.matrix_rank(G) < k:
        raise RankDeficient("vertex enumeration needs G of full column rank")
    best = None
    for subset in itertools.combinations(range(d), k - 1):
        v = _null_direction(G[list(subset)], k)
        if v is None:
            continue
        norm = np.abs(G @ v).sum()
        v = v / norm
        if alpha @ v < 0:
            v = -v
        value = float(alpha @ v)
        if best is None or value > best[0] + 1e-12 * max(1.0, abs(best[0])):
            best = (value, v, subset)
    value, v, subset = best
    Gv = G @ v
    zero_rows = tuple(int(i) for i in np.nonzero(np.abs(Gv) <= ZERO_TOL)[0])
    return VertexCertificate(value, v, zero_rows, subset)


def _slice_basis(alpha: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of alpha."""
    k = alpha.size
    if k == 1:
        return np.zeros((1, 0))
    Q, _ = np.linalg.qr(np.column_stack([alpha, np.eye(k)]))
    return Q[:, 1:k]


def grid_bound_search(G, alpha, radius: float, n: int) -> float:
    """max 1/|G beta|_1 over a grid on the slice alpha.beta = 1.

    The slice is parametrized as alpha/|alpha|^2 + E z with E orthonormal and
    z on an n-point-per-axis grid in [-radius, radius]^(k-1).
    """
    G = _as_matrix(G)
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    k = alpha.size
    if k > 3:
        raise InstanceTooLarge("grid search is limited to k <= 3")
    if n < 1 or radius < 0:
        raise ValueError("n must be positive and radius non-negative")
    base = alpha / (alpha @ alpha)
    E = _slice_basis(alpha)
    axis = np.linspace(-radius, radius, n)
    if k == 1:
        betas = base[None, :]
    else:
        mesh = np.meshgrid(*([axis] * (k - 1)), indexing="ij")
        Z = np.stack([m.ravel() for m in mesh], axis=1)
        betas = base[None, :] + Z @ E.T
    seminorms = np.abs(betas @ G.T).sum(axis=1)
    with np.errstate(divide="ignore"):
        return float(np.max(1.0 / seminorms))


def random_feasible_beta(alpha, seed: int, scale: float = 1.0) -> np.ndarray:
    """alpha/|alpha|^2 plus a Gaussian step of size ``scale`` orthogonal to alpha."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if not np.any(alpha != 0):
        raise ValueError("alpha must be non-zero")
    rng = np.random.default_rng(seed)
    z = rng.normal(size=alpha.size) * scale
    z -= (z @ alpha) / (alpha @ alpha) * alpha
    return alpha / (alpha @ alpha) + z
