"""Parametrized scalar fields f(x; theta) probed by a fixed set of sensors.

Three model kinds are supported:

``LinearBasis``
    f(x; theta) = sum_m theta_m b_m(x) with b_m from a fixed catalog
    (monomials, Gaussians, inverse distance).
``PointSources``
    Inverse-distance sources at known locations. In ``"amplitude"`` mode the
    parameters are the source strengths, f = sum_j theta_j / |x - p_j|. In
    ``"position"`` mode the strengths are fixed and the parameters displace
    each source along a given direction, f = sum_j c_j / |x - p_j - theta_j u_j|,
    which makes the field nonlinear in theta.
``ExplicitLinear``
    The sensor amplitudes are given directly, f = G theta + c.

Models are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError

__all__ = [
    "Monomial",
    "Gaussian",
    "InverseDistance",
    "monomials",
    "FieldModel",
    "LinearBasis",
    "PointSources",
    "ExplicitLinear",
    "GradientMatrix",
    "field_vector",
    "gradient_matrix",
    "finite_diff_gradient",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _as_points(points, dim: int | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # A flat list is a list of 1-D coordinates unless the model says otherwise.
        pts = pts.reshape(1, -1) if dim is not None and dim > 1 and pts.size == dim else pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ModelError(f"points must be a (n, dim) array, got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise ModelError(f"points have dimension {pts.shape[1]}, model expects {dim}")
    if not np.all(np.isfinite(pts)):
        raise ModelError("points must be finite")
    return pts


# ---------------------------------------------------------------------------
# basis catalog


@dataclass(frozen=True)
class Monomial:
    """prod_k x_k ** powers[k]."""

    powers: tuple[int, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != len(self.powers):
            raise ModelError(f"monomial of dimension {len(self.powers)} applied to {x.shape[1]}-d points")
        out = np.ones(x.shape[0])
        for k, p in enumerate(self.powers):
            if p:
                out = out * x[:, k] ** p
        return out


@dataclass(frozen=True)
class Gaussian:
    """exp(-|x - center|^2 / (2 width^2))."""

    center: tuple[float, ...]
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ModelError("Gaussian width must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((np.asarray(x) - np.asarray(self.center)) ** 2, axis=1)
        return np.exp(-r2 / (2.0 * self.width**2))


@dataclass(frozen=True)
class InverseDistance:
    """1 / |x - center|."""

    center: tuple[float, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x) - np.asarray(self.center), axis=1)
        if np.any(r == 0):
            raise ModelError("inverse-distance basis evaluated at its own center")
        return 1.0 / r


def monomials(degree: int, dim: int = 1) -> list[Monomial]:
    """All monomials of total degree <= ``degree`` in ``dim`` variables, graded order."""
    if degree < 0:
        raise ModelError("degree must be non-negative")
    out = []
    for total in range(degree + 1):
        for powers in _compositions(total, dim):
            out.append(Monomial(powers))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class GradientMatrix:
    """G[i, m] = d f_i / d theta_m evaluated at ``eval_point``."""

    entries: np.ndarray
    eval_point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))
        object.__setattr__(self, "eval_point", _frozen(self.eval_point))
        if self.entries.ndim != 2:
            raise ModelError("gradient matrix must be 2-D")
        if not np.all(np.isfinite(self.entries)):
            raise ModelError("gradient matrix has non-finite entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


class FieldModel:
    """Common interface. Subclasses implement ``field_at`` and ``jacobian_at``."""

    kind: str = ""
    positions: np.ndarray
    param_dim: int

    @property
    def num_sensors(self) -> int:
        return self.positions.shape[0]

    @property
    def spatial_dim(self) -> int:
        return self.positions.shape[1]

    @property
    def is_linear(self) -> bool:
        return True

    def offset(self) -> np.ndarray:
        """Constant term c in f = G theta + c (zero for basis/amplitude models)."""
        return np.zeros(self.num_sensors)

    def check_theta(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        if th.shape != (self.param_dim,):
            raise ModelError(f"theta has length {th.size}, model has {self.param_dim} parameters")
        if not np.all(np.isfinite(th)):
            raise ModelError("theta must be finite")
        return th

    def field_at(self, points, theta) -> np.ndarray:
        raise NotImplementedError

    def jacobian_at(self, points, theta) -> np.ndarray:
        raise NotImplementedError

    def with_positions(self, positions) -> "FieldModel":
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinearBasis(FieldModel):
    positions: np.ndarray
    basis: tuple

    kind = "LinearBasis"

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(_as_points(self.positions)))
        object.__setattr__(self, "basis", tuple(self.basis))
        if len(self.basis) < 1:
            raise ModelError("basis must contain at least one function")
        if self.positions.shape[0] < 1:
            raise ModelError("at least one sensor is required")

    @property
    def param_dim(self) -> int:
        return len(self.basis)

    def _design(self, points) -> np.ndarray:
        pts = _as_points(points, self.spatial_dim)
        return np.column_stack([b(pts) for b in self.basis])

    def field_at(self, points, theta) -> np.ndarray:
        return self._design(points) @ self.check_theta(theta)

    def jacobian_at(self, points, theta) -> np.ndarray:
        self.check_theta(theta)
        return self._design(points)

    def with_positions(self, positions) -> "LinearBasis":
        return LinearBasis(positions, self.basis)


@dataclass(frozen=True, eq=False)
class PointSources(FieldModel):
    positions: np.ndarray
    sources: np.ndarray
    mode: str = "amplitude"
    charges: np.ndarray | None = None
    directions: np.ndarray | None = None
    initial_guess: np.ndarray | None = None

    kind = "PointSources"

    def __post_init__(self):
        pos = _as_points(self.positions)
        src = _as_points(self.sources, pos.shape[1])
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "sources", _frozen(src))
        if self.mode not in ("amplitude", "position"):
            raise ModelError(f"unknown PointSources mode {self.mode!r}")
        k, dim = src.shape
        charges = np.ones(k) if self.charges is None else np.asarray(self.charges, dtype=np.float64)
        if charges.shape != (k,):
            raise ModelError("one charge per source is required")
        if self.directions is None:
            dirs = np.zeros((k, dim))
            dirs[:, 0] = 1.0
        else:
            dirs = _as_points(self.directions, dim)
            if dirs.shape[0] != k:
                raise ModelError("one direction per source is required")
            norms = np.linalg.norm(dirs, axis=1)
            if np.any(norms == 0):
                raise ModelError("source directions must be non-zero")
            dirs = dirs / norms[:, None]
        guess = np.zeros(k) if self.initial_guess is None else np.asarray(self.initial_guess, dtype=np.float64)
        if guess.shape != (k,):
            raise ModelError("initial_guess must have one entry per source")
        object.__setattr__(self, "charges", _frozen(charges))
        object.__setattr__(self, "directions", _frozen(dirs))
        object.__setattr__(self, "initial_guess", _frozen(guess))
        # Singular configurations are rejected here; in position mode this is
        # checked at the undisplaced source locations.
        self._distances(self.positions, np.zeros(k))

    @property
    def param_dim(self) -> int:
        return self.sources.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.mode == "amplitude"

    def _locations(self, theta: np.ndarray) -> np.ndarray:
        if self.mode == "position":
            return self.sources + theta[:, None] * self.directions
        return np.asarray(self.sources)

    def _distances(self, pts: np.ndarray, theta: np.ndarray):
        diff = pts[:, None, :] - self._locations(theta)[None, :, :]
        r = np.linalg.norm(diff, axis=2)
        if np.any(r == 0):
            raise ModelError("a sensor or evaluation point coincides with a point source")
        return diff, r

    def field_at(self, points, theta) -> np.ndarray:
        th = self.check_theta(theta)
        _, r = self._distances(_as_points(points, self.spatial_dim), th)
        weights = th if self.mode == "amplitude" else self.charges
        return (1.0 / r) @ weights

    def jacobian_at(self, points, theta) -> np.ndarray:
        th = self.check_theta(theta)
        diff, r = self._distances(_as_points(points, self.spatial_dim), th)
        if self.mode == "amplitude":
            return 1.0 / r
        proj = np.einsum("nkd,kd->nk", diff, self.directions)
        return self.charges[None, :] * proj / r**3

    def with_positions(self, positions) -> "PointSources":
        return PointSources(
            positions,
            self.sources,
            mode=self.mode,
            charges=self.charges,
            directions=self.directions,
            initial_guess=self.initial_guess,
        )


@dataclass(frozen=True, eq=False)
class ExplicitLinear(FieldModel):
    """Sensor amplitudes f = G theta + c with no spatial structure."""

    G: np.ndarray
    c: np.ndarray | None = None

    kind = "ExplicitLinear"

    def __post_init__(self):
        G = np.array(self.G, dtype=np.float64)
        if G.ndim != 2 or min(G.shape) < 1:
            raise ModelError("G must be a non-empty d x k matrix")
        if not np.all(np.isfinite(G)):
            raise ModelError("G must be finite")
        c = np.zeros(G.shape[0]) if self.c is None else np.asarray(self.c, dtype=np.float64)
        if c.shape != (G.shape[0],):
            raise ModelError("offset c must have one entry per sensor")
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "c", _frozen(c))

    @property
    def positions(self) -> np.ndarray:
        # Sensors are identified by index only.
        return np.arange(self.G.shape[0], dtype=np.float64).reshape(-1, 1)

    @property
    def param_dim(self) -> int:
        return self.G.shape[1]

    def offset(self) -> np.ndarray:
        return np.array(self.c)

    def sensor_field(self, theta) -> np.ndarray:
        return self.G @ self.check_theta(theta) + self.c

    def field_at(self, points, theta) -> np.ndarray:
        raise ModelError("ExplicitLinear models have no spatial dependence")

    def jacobian_at(self, points, theta) -> np.ndarray:
        raise ModelError("ExplicitLinear models have no spatial dependence")


# ---------------------------------------------------------------------------
# operations


def field_vector(model: FieldModel, theta: Sequence[float]) -> np.ndarray:
    """Local amplitudes (f_1(theta), ..., f_d(theta))."""
    if isinstance(model, ExplicitLinear):
        return model.sensor_field(theta)
    return model.field_at(model.positions, theta)


def gradient_matrix(model: FieldModel, theta: Sequence[float]) -> GradientMatrix:
    """Analytic gradient matrix G_im = d f_i / d theta_m at ``theta``."""
    th = model.check_theta(theta)
    if isinstance(model, ExplicitLinear):
        return GradientMatrix(model.G, th)
    return GradientMatrix(model.jacobian_at(model.positions, th), th)


def finite_diff_gradient(model: FieldModel, theta: Sequence[float], h: float) -> GradientMatrix:
    """Central-difference approximation of :func:`gradient_matrix`."""
    if not h > 0 or not math.isfinite(h):
        raise ModelError("finite-difference step h must be positive")
    th = model.check_theta(theta)
    cols = []
    for m in range(th.size):
        step = np.zeros_like(th)
        step[m] = h
        cols.append((field_vector(model, th + step) - field_vector(model, th - step)) / (2.0 * h))
    return GradientMatrix(np.column_stack(cols), th)
