"""Dense-tableau two-phase simplex for small linear programs.

Problems are stated as::

    maximize    c . x
    subject to  A[i] . x  (<= or =)  b[i]
                lower <= x <= upper          (bounds may be infinite)

The solver is deterministic: Bland's rule (lowest index entering column,
lowest basic index among ratio ties) both prevents cycling on degenerate
vertices and makes the returned vertex a pure function of the input.
After the last pivot the basic solution is recomputed from the original
data with a dense solve, so reported values do not carry the rounding
accumulated across pivots.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Status", "LinearProgram", "LpSolution", "solve_lp", "FEAS_TOL", "OPT_TOL"]

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
_PIVOT_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    relations: list[str]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        n = self.objective.size
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        m = self.A.shape[0]
        if n < 1 or m < 1:
            raise ValueError("a linear program needs at least one variable and one constraint")
        if self.b.size != m or len(self.relations) != m:
            raise ValueError("A, b and relations disagree on the number of constraints")
        bad = [r for r in self.relations if r not in ("<=", "=")]
        if bad:
            raise ValueError(f"unsupported relation(s) {bad}; use '<=' or '='")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=np.float64).reshape(-1)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.objective)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("objective, A and b must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)) or np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("invalid variable bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray
    objective_value: float
    basis: tuple[int, ...] = field(default_factory=tuple)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    """Minimization tableau over non-negative variables with a feasible basis."""

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        others = np.nonzero(T[:, col])[0]
        for r in others:
            if r != row:
                T[r] -= T[r, col] * T[row]
        T[:, col] = 0.0
        T[row, col] = 1.0
        rhs = T[:-1, -1]
        rhs[(rhs < 0) & (rhs > -FEAS_TOL)] = 0.0
        self.basis[row] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        T = self.T
        m = T.shape[0] - 1
        while True:
            if self.iterations > max_iter:
                raise RuntimeError("simplex iteration limit exceeded")
            reduced = T[m, :-1]
            candidates = np.nonzero((reduced < -OPT_TOL) & allowed)[0]
            if candidates.size == 0:
                return Status.OPTIMAL
            col = int(candidates[0])
            column = T[:m, col]
            positive = np.nonzero(column > _PIVOT_TOL)[0]
            if positive.size == 0:
                return Status.UNBOUNDED
            # Rounding can leave degenerate rows slightly negative; treat them as zero.
            ratios = np.maximum(T[positive, -1], 0.0) / column[positive]
            best = ratios.min()
            ties = positive[ratios <= best + 1e-12 * max(1.0, abs(best))]
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)


def _standard_form(lp: LinearProgram):
    """Rewrite bounds so every variable is non-negative.

    Returns (c, A, b, relations, shift, back) with x = shift + back @ y.
    """
    n = lp.objective.size
    cols, shift = [], np.zeros(n)
    extra_rows, extra_b = [], []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append(len(cols) - 1)
                extra_b.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    back = np.zeros((n, ny))
    for y, (j, sgn) in enumerate(cols):
        back[j, y] = sgn
    A = lp.A @ back
    b = lp.b - lp.A @ shift
    c = lp.objective @ back
    rel = list(lp.relations)
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        for r, y in enumerate(extra_rows):
            E[r, y] = 1.0
        A = np.vstack([A, E])
        b = np.concatenate([b, extra_b])
        rel += ["<="] * len(extra_rows)
    return c, A, b, rel, shift, back


def _violation(full: np.ndarray, b: np.ndarray, y: np.ndarray) -> float:
    resid = full @ y - b
    neg = max(0.0, -float(y.min())) if y.size else 0.0
    return max(float(np.max(np.abs(resid))), neg)


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` (a maximization) and return a vertex optimum or a status."""
    c, A, b, rel, shift, back = _standard_form(lp)
    m, ny = A.shape
    # Minimize -c . y.
    cost = -c
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    ineq = [i for i in range(m) if rel[i] == "<="]
    n_slack = len(ineq)
    slack_col = {i: ny + s for s, i in enumerate(ineq)}
    # Rows needing an artificial: equalities, and inequalities flipped to >=.
    art_rows = [i for i in range(m) if rel[i] == "=" or sign[i] < 0]
    n_art = len(art_rows)
    ncol = ny + n_slack + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :ny] = A
    for i in ineq:
        T[i, slack_col[i]] = sign[i]
    T[:m, -1] = b
    basis = [-1] * m
    for i in ineq:
        if sign[i] > 0:
            basis[i] = slack_col[i]
    for a, i in enumerate(art_rows):
        col = ny + n_slack + a
        T[i, col] = 1.0
        basis[i] = col
    limit = max_iter if max_iter is not None else 200 * (m + ncol)

    tab = _Tableau(T, basis)
    feas_scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    if n_art:
        # Phase 1: minimize the sum of artificials.
        T[m, :] = 0.0
        for a, i in enumerate(art_rows):
            T[m, :] -= T[i, :]
            T[m, ny + n_slack + a] = 0.0
        allowed = np.ones(ncol, dtype=bool)
        tab.run(allowed, limit)
        if -T[m, -1] > FEAS_TOL * feas_scale:
            return LpSolution(Status.INFEASIBLE, np.full(lp.objective.size, np.nan), float("nan"),
                              iterations=tab.iterations)
        # Drive zero-valued artificials out of the basis; drop redundant rows.
        keep = []
        for r in range(m):
            if tab.basis[r] >= ny + n_slack:
                row = T[r, : ny + n_slack]
                nz = np.nonzero(np.abs(row) > 1e-9)[0]
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                    keep.append(r)
            else:
                keep.append(r)
        T = np.vstack([T[keep, : ny + n_slack], T[m:, : ny + n_slack]])
        T = np.hstack([T, np.vstack([tab.T[keep, -1:], tab.T[m:, -1:]])])
        basis = [tab.basis[r] for r in keep]
        m = len(keep)
        ncol = ny + n_slack
        iters = tab.iterations
        tab = _Tableau(T, basis)
        tab.iterations = iters
    else:
        keep = list(range(m))
    # Phase 2 objective row in terms of the current basis.
    full_cost = np.zeros(ncol)
    full_cost[:ny] = cost
    T = tab.T
    T[m, :-1] = full_cost
    T[m, -1] = 0.0
    for r, col in enumerate(tab.basis):
        if T[m, col] != 0.0:
            T[m] -= T[m, col] * T[r]
    status = tab.run(np.ones(ncol, dtype=bool), limit)
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, np.full(lp.objective.size, np.nan), float("inf"),
                          iterations=tab.iterations)

    # Recompute the basic solution from the original rows for accuracy.
    full = np.zeros((len(sign), ny + n_slack))
    full[:, :ny] = A
    for i in ineq:
        full[i, slack_col[i]] = sign[i]
    B = full[keep][:, tab.basis]
    from_tableau = np.zeros(ny + n_slack)
    from_tableau[tab.basis] = T[:m, -1]
    y_all = from_tableau
    try:
        y_solve = np.zeros(ny + n_slack)
        y_solve[tab.basis] = np.linalg.solve(B, b[keep])
        if _violation(full, b, y_solve) <= _violation(full, b, from_tableau):
            y_all = y_solve
    except np.linalg.LinAlgError:
        pass
    y_all = np.maximum(y_all, 0.0)
    x = shift + back @ y_all[:ny]
    value = float(lp.objective @ x)
    resid = lp.A @ x - lp.b
    active = tuple(
        i for i in range(lp.A.shape[0])
        if lp.relations[i] == "=" or abs(resid[i]) <= FEAS_TOL * max(1.0, abs(lp.b[i]))
    )
    return LpSolution(Status.OPTIMAL, x, value, active, tab.iterations)
