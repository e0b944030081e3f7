"""Dual-basis construction and Fisher-matrix change of variables.

Given alpha = grad q, :func:`build_dual_basis` completes alpha to a basis
{alpha_n} (rows of J) with dual basis {beta_n} (columns of J^-1) such that
beta_1 = e_1 / a_1, where a_1 is the largest-magnitude entry of alpha. In
these coordinates the Fisher matrix of q decouples from the other k-1
coordinates exactly when the first row of the Fisher matrix in theta is
proportional to alpha, which is what the GHZ parity measurement produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import _as_matrix

__all__ = ["BasisPair", "build_dual_basis", "transform_fisher", "ghz_rank_one_fisher", "first_row_leak"]


@dataclass(frozen=True, eq=False)
class BasisPair:
    """Jacobian J (rows alpha_n) and its inverse (columns beta_n).

    ``J`` and ``J_inv`` act on the original parameter order. ``perm`` lists
    the original index placed first, second, ... in the permuted frame used
    by the construction; ``J_perm``/``J_inv_perm`` are the same matrices in
    that frame.
    """

    J: np.ndarray
    J_inv: np.ndarray
    perm: np.ndarray

    @property
    def P(self) -> np.ndarray:
        k = self.perm.size
        P = np.zeros((k, k))
        P[np.arange(k), self.perm] = 1.0
        return P

    @property
    def J_perm(self) -> np.ndarray:
        return self.J @ self.P.T

    @property
    def J_inv_perm(self) -> np.ndarray:
        return self.P @ self.J_inv

    @property
    def a1(self) -> float:
        return float(self.J[0, self.perm[0]])


def build_dual_basis(alpha) -> BasisPair:
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if not np.any(alpha != 0):
        raise ValueError("alpha must be non-zero")
    k = alpha.size
    lead = int(np.argmax(np.abs(alpha)))  # first index among ties
    perm = np.array([lead] + [i for i in range(k) if i != lead])
    a = alpha[perm]
    a1, rest = a[0], a[1:]
    # V = identity for the free block, hence U = V^-T = identity.
    Jp = np.eye(k)
    Jp[0] = a
    Jp_inv = np.eye(k)
    Jp_inv[0, 0] = 1.0 / a1
    Jp_inv[0, 1:] = -rest / a1
    P = np.zeros((k, k))
    P[np.arange(k), perm] = 1.0
    return BasisPair(Jp @ P, P.T @ Jp_inv, perm)


def transform_fisher(F_theta, basis: BasisPair) -> np.ndarray:
    """Fisher matrix in the q coordinates, (J^-1)^T F J^-1."""
    F = np.asarray(F_theta, dtype=np.float64)
    if F.shape != basis.J.shape:
        raise ValueError("Fisher matrix and basis dimensions differ")
    if np.max(np.abs(F - F.T)) > 1e-8 * max(1.0, np.max(np.abs(F))):
        raise ValueError("Fisher matrix must be symmetric")
    Fq = basis.J_inv.T @ F @ basis.J_inv
    return 0.5 * (Fq + Fq.T)


def ghz_rank_one_fisher(G, w, t: float) -> np.ndarray:
    """Classical Fisher matrix t^2 (G^T w)(G^T w)^T of the GHZ parity readout."""
    if not t > 0:
        raise ValueError("t must be positive")
    g = _as_matrix(G).T @ np.asarray(w, dtype=np.float64)
    return t * t * np.outer(g, g)


def first_row_leak(Fq: np.ndarray) -> float:
    """Largest |F(q)_1n| for n != 1."""
    return float(np.max(np.abs(Fq[0, 1:]))) if Fq.shape[0] > 1 else 0.0
