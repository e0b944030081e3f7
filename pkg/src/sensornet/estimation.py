"""Bound, protocol and dual-protocol linear programs for one instance (G, alpha).

For a d x k gradient matrix G and a target gradient alpha = grad q:

* bound problem      u   = max 1/|G beta|_1   s.t. alpha . beta = 1
* protocol problem   u'  = min |w|_inf        s.t. G^T w = alpha
* dual problem       u'' = max alpha . v      s.t. |G v|_1 <= 1

All three share one optimum, and u**2 / t**2 is the smallest attainable
mean squared error for an evolution time t.

The optimal faces are often not single points (the three-sensor toy
instance already has a segment of optimal beta). Solution vectors are
therefore made canonical with a second LP that minimizes the l1 norm of the
vector over the optimal face; objective values are reported from the first
solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentConstraint, ModelError, UnboundedPrecision
from .field_model import GradientMatrix
from .lp import LinearProgram, Status, solve_lp

__all__ = [
    "EstimationProblem",
    "BoundSolution",
    "WeightSolution",
    "DualSolution",
    "solve_bound",
    "solve_protocol",
    "solve_dual",
    "unentangled_weights",
    "check_identifiability",
    "mse_lower_bound",
    "random_instance",
]

# Below this the bound-problem optimum |G beta|_1 counts as zero: infinite bound.
ZERO_SEMINORM = 1e-12
# Relative slack granted to the primary optimum when canonicalizing vectors.
_FACE_SLACK = 1e-11
_INF = np.inf


def _as_matrix(G) -> np.ndarray:
    if isinstance(G, GradientMatrix):
        return np.array(G.entries)
    return np.array(G, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    G: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        G = _as_matrix(self.G)
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1)
        if G.ndim != 2:
            raise ModelError("G must be a d x k matrix")
        if alpha.shape != (G.shape[1],):
            raise ModelError(f"alpha has length {alpha.size}, G has {G.shape[1]} columns")
        if not np.any(alpha != 0):
            raise ModelError("alpha must be non-zero")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(alpha))):
            raise ModelError("G and alpha must be finite")
        G.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return self.G.shape[0]

    @property
    def k(self) -> int:
        return self.G.shape[1]

    def scaled(self, c: float) -> "EstimationProblem":
        return EstimationProblem(self.G, c * self.alpha)


@dataclass(frozen=True, eq=False)
class BoundSolution:
    u: float
    beta0: np.ndarray


@dataclass(frozen=True, eq=False)
class WeightSolution:
    u_prime: float
    w0: np.ndarray


@dataclass(frozen=True, eq=False)
class DualSolution:
    u_dprime: float
    v0: np.ndarray


def _free(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.full(n, -_INF), np.full(n, _INF)


def _abs_rows(M: np.ndarray, n_aux: int, aux_offset: int, total: int) -> np.ndarray:
    """Rows encoding +-(M x) - aux <= 0, i.e. aux >= |M x|."""
    r, n = M.shape
    rows = np.zeros((2 * r, total))
    rows[:r, :n] = M
    rows[r:, :n] = -M
    rows[:r, aux_offset:aux_offset + n_aux] = -np.eye(r, n_aux)
    rows[r:, aux_offset:aux_offset + n_aux] = -np.eye(r, n_aux)
    return rows


def solve_bound(p: EstimationProblem, canonical: bool = True) -> BoundSolution:
    """Solve min |G beta|_1 s.t. alpha . beta = 1 and return u = 1/optimum."""
    d, k = p.d, p.k
    n = k + d
    c = np.concatenate([np.zeros(k), -np.ones(d)])
    A = np.vstack([_abs_rows(p.G, d, k, n), np.concatenate([p.alpha, np.zeros(d)])])
    b = np.concatenate([np.zeros(2 * d), [1.0]])
    rel = ["<="] * (2 * d) + ["="]
    lo = np.concatenate([np.full(k, -_INF), np.zeros(d)])
    hi = np.full(n, _INF)
    sol = solve_lp(LinearProgram(c, A, b, rel, lo, hi))
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"bound LP ended with status {sol.status.value}")
    optimum = -sol.objective_value
    if optimum <= ZERO_SEMINORM:
        raise UnboundedPrecision(
            "a parameter direction invisible to every sensor changes q; the precision bound is infinite"
        )
    beta = sol.x[:k]
    if canonical:
        # min |beta|_1 over {alpha.beta = 1, |G beta|_1 <= optimum}
        n2 = k + d + k
        c2 = np.concatenate([np.zeros(k + d), -np.ones(k)])
        rows = [
            _abs_rows(p.G, d, k, n2),
            np.concatenate([np.zeros(k), np.ones(d), np.zeros(k)])[None, :],
            _abs_rows(np.eye(k), k, k + d, n2),
            np.concatenate([p.alpha, np.zeros(d + k)])[None, :],
        ]
        A2 = np.vstack(rows)
        b2 = np.concatenate([np.zeros(2 * d), [optimum * (1 + _FACE_SLACK)], np.zeros(2 * k), [1.0]])
        rel2 = ["<="] * (2 * d + 1 + 2 * k) + ["="]
        lo2 = np.concatenate([np.full(k, -_INF), np.zeros(d + k)])
        sol2 = solve_lp(LinearProgram(c2, A2, b2, rel2, lo2, np.full(n2, _INF)))
        if sol2.optimal:
            beta = sol2.x[:k]
    return BoundSolution(1.0 / optimum, beta / (p.alpha @ beta))


def _snap_weights(p: EstimationProblem, w: np.ndarray, u_prime: float) -> np.ndarray:
    """Pin entries within rounding of +-u' to exactly +-u' and refit the rest.

    The snapped vector is kept only if it is at least as consistent as ``w``.
    """
    tight = np.abs(np.abs(w) - u_prime) <= 1e-9 * max(1.0, u_prime)
    if not tight.any():
        return w
    snapped = w.copy()
    snapped[tight] = np.sign(w[tight]) * u_prime
    free = ~tight
    rhs = p.alpha - p.G[tight].T @ snapped[tight]
    if free.any():
        snapped[free], *_ = np.linalg.lstsq(p.G[free].T, rhs, rcond=None)
    before = np.max(np.abs(p.G.T @ w - p.alpha))
    after = np.max(np.abs(p.G.T @ snapped - p.alpha))
    if after <= max(before, 1e-15) and np.max(np.abs(snapped)) <= u_prime * (1 + 1e-12):
        return snapped
    return w


def solve_protocol(p: EstimationProblem, canonical: bool = True) -> WeightSolution:
    """Solve min |w|_inf s.t. G^T w = alpha."""
    d, k = p.d, p.k
    n = d + 1
    c = np.concatenate([np.zeros(d), [-1.0]])
    eq = np.hstack([p.G.T, np.zeros((k, 1))])
    box = np.zeros((2 * d, n))
    box[:d, :d] = np.eye(d)
    box[d:, :d] = -np.eye(d)
    box[:, d] = -1.0
    A = np.vstack([eq, box])
    b = np.concatenate([p.alpha, np.zeros(2 * d)])
    rel = ["="] * k + ["<="] * (2 * d)
    lo = np.concatenate([np.full(d, -_INF), [0.0]])
    sol = solve_lp(LinearProgram(c, A, b, rel, lo, np.full(n, _INF)))
    if sol.status is Status.INFEASIBLE:
        raise InconsistentConstraint("G^T w = alpha has no solution: alpha is outside the row space of G")
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"protocol LP ended with status {sol.status.value}")
    u_prime = -sol.objective_value
    w = sol.x[:d]
    if canonical:
        # min |w|_1 over {G^T w = alpha, |w|_inf <= u'}
        cap = u_prime * (1 + _FACE_SLACK)
        n2 = 2 * d
        c2 = np.concatenate([np.zeros(d), -np.ones(d)])
        A2 = np.vstack([np.hstack([p.G.T, np.zeros((k, d))]), _abs_rows(np.eye(d), d, d, n2)])
        b2 = np.concatenate([p.alpha, np.zeros(2 * d)])
        rel2 = ["="] * k + ["<="] * (2 * d)
        lo2 = np.concatenate([np.full(d, -cap), np.zeros(d)])
        hi2 = np.concatenate([np.full(d, cap), np.full(d, _INF)])
        sol2 = solve_lp(LinearProgram(c2, A2, b2, rel2, lo2, hi2))
        if sol2.optimal:
            w = _snap_weights(p, sol2.x[:d], u_prime)
    return WeightSolution(u_prime, w)


def solve_dual(p: EstimationProblem, canonical: bool = True) -> DualSolution:
    """Solve max alpha . v s.t. |G v|_1 <= 1."""
    d, k = p.d, p.k
    n = k + d
    c = np.concatenate([p.alpha, np.zeros(d)])
    A = np.vstack([np.concatenate([np.zeros(k), np.ones(d)])[None, :], _abs_rows(p.G, d, k, n)])
    b = np.concatenate([[1.0], np.zeros(2 * d)])
    rel = ["<="] * (1 + 2 * d)
    lo = np.concatenate([np.full(k, -_INF), np.zeros(d)])
    sol = solve_lp(LinearProgram(c, A, b, rel, lo, np.full(n, _INF)))
    if sol.status is Status.UNBOUNDED:
        raise UnboundedPrecision(
            "G has a null vector not orthogonal to alpha; the dual problem is unbounded"
        )
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"dual LP ended with status {sol.status.value}")
    u_dprime = sol.objective_value
    v = sol.x[:k]
    if canonical:
        # min |v|_1 over {|G v|_1 <= 1, alpha . v >= u''}
        n2 = k + d + k
        c2 = np.concatenate([np.zeros(k + d), -np.ones(k)])
        A2 = np.vstack([
            np.concatenate([np.zeros(k), np.ones(d), np.zeros(k)])[None, :],
            _abs_rows(p.G, d, k, n2),
            _abs_rows(np.eye(k), k, k + d, n2),
            np.concatenate([-p.alpha, np.zeros(d + k)])[None, :],
        ])
        b2 = np.concatenate([[1.0], np.zeros(2 * d + 2 * k), [-u_dprime * (1 - _FACE_SLACK)]])
        rel2 = ["<="] * (2 + 2 * d + 2 * k)
        lo2 = np.concatenate([np.full(k, -_INF), np.zeros(d + k)])
        sol2 = solve_lp(LinearProgram(c2, A2, b2, rel2, lo2, np.full(n2, _INF)))
        if sol2.optimal:
            v = sol2.x[:k]
    norm = np.abs(p.G @ v).sum()
    if norm > 0:
        v = v / norm
    return DualSolution(u_dprime, v)


def unentangled_weights(p: EstimationProblem) -> tuple[np.ndarray, float]:
    """Minimum-Euclidean-norm solution of G^T w = alpha and its MSE coefficient |w|_2^2."""
    if not check_identifiability(p.G, p.alpha):
        raise InconsistentConstraint("G^T w = alpha has no solution: alpha is outside the row space of G")
    w, *_ = np.linalg.lstsq(p.G.T, p.alpha, rcond=None)
    return w, float(w @ w)


def check_identifiability(G, alpha, full_rank: bool = False) -> bool:
    """True iff alpha lies in the row space of G (and, optionally, G has rank k)."""
    G = _as_matrix(G)
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if full_rank and np.linalg.matrix_rank(G) < G.shape[1]:
        return False
    w, *_ = np.linalg.lstsq(G.T, alpha, rcond=None)
    residual = np.linalg.norm(G.T @ w - alpha)
    return bool(residual <= 1e-8 * np.linalg.norm(alpha))


def mse_lower_bound(u: float, t: float) -> float:
    """Sharpest MSE bound u**2 / t**2 for evolution time t."""
    if not t > 0:
        raise ValueError("evolution time t must be positive")
    if not u > 0:
        raise ValueError("u must be positive")
    return u * u / (t * t)


def random_instance(
    rng: np.random.Generator,
    d: int,
    k: int,
    low: float = -2.0,
    high: float = 2.0,
    min_singular: float = 1e-3,
) -> EstimationProblem:
    """Random well-conditioned identifiable instance with uniform entries.

    Draws are rejected until alpha is in the row space of G and the smallest
    singular value of G is at least ``min_singular``.
    """
    if d < k:
        raise ValueError("random instances need d >= k")
    while True:
        G = rng.uniform(low, high, size=(d, k))
        alpha = rng.uniform(low, high, size=k)
        if not np.any(alpha != 0):
            continue
        if np.linalg.svd(G, compute_uv=False)[-1] < min_singular:
            continue
        if check_identifiability(G, alpha):
            return EstimationProblem(G, alpha)
