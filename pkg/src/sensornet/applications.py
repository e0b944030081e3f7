"""Builders for (G, alpha) instances: interpolation, kernel functionals, placement.

For nonlinear models both G and alpha depend on the parameter point, so
every builder takes a reference ``theta_ref`` and its result is only valid
locally around it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InconsistentConstraint, ModelError, NonEstimableError
from .estimation import EstimationProblem, check_identifiability, solve_protocol
from .field_model import ExplicitLinear, FieldModel, gradient_matrix

__all__ = [
    "FunctionSpec",
    "PlacementResult",
    "q_value",
    "q_gradient",
    "quadrature_rule",
    "build_interpolation",
    "build_functional",
    "build_problem",
    "optimize_placement",
]

log = logging.getLogger(__name__)

KINDS = ("linear_combination", "field_at_point", "kernel_functional")
KERNELS = ("constant", "gaussian", "delta")


@dataclass(frozen=True)
class FunctionSpec:
    """The estimated quantity q(theta).

    ``linear_combination``  q = alpha . theta
    ``field_at_point``      q = f(x0; theta)
    ``kernel_functional``   q = int_R k(x) f(x; theta) dx over a box R
    """

    kind: str
    alpha: tuple[float, ...] | None = None
    x0: tuple[float, ...] | None = None
    kernel: str | None = None
    center: tuple[float, ...] | None = None
    width: float | None = None
    region: tuple[tuple[float, float], ...] | None = None
    order: int = 8
    panels: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown function kind {self.kind!r}")
        if self.kind == "linear_combination" and self.alpha is None:
            raise ModelError("linear_combination needs alpha")
        if self.kind == "field_at_point" and self.x0 is None:
            raise ModelError("field_at_point needs x0")
        if self.kind == "kernel_functional":
            if self.kernel not in KERNELS:
                raise ModelError(f"unknown kernel {self.kernel!r}")
            if self.kernel == "delta":
                if self.x0 is None:
                    raise ModelError("delta kernel needs x0")
            else:
                if self.region is None:
                    raise ModelError("kernel functional needs a region")
                if not all(np.isfinite(lo) and np.isfinite(hi) and hi > lo for lo, hi in self.region):
                    raise ModelError("integration region must be a bounded box with hi > lo")
                if self.order < 2 or self.panels < 1:
                    raise ModelError("quadrature order must be >= 2 and panels >= 1")
            if self.kernel == "gaussian" and (self.center is None or not (self.width or 0) > 0):
                raise ModelError("gaussian kernel needs a center and a positive width")

    @classmethod
    def linear(cls, alpha: Sequence[float]) -> "FunctionSpec":
        return cls("linear_combination", alpha=tuple(float(a) for a in alpha))

    @classmethod
    def field_at(cls, x0) -> "FunctionSpec":
        return cls("field_at_point", x0=tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist()))

    @classmethod
    def functional(cls, kernel: str, region=None, order: int = 8, panels: int = 1,
                   center=None, width=None, x0=None) -> "FunctionSpec":
        return cls(
            "kernel_functional",
            kernel=kernel,
            region=None if region is None else tuple((float(lo), float(hi)) for lo, hi in region),
            order=order,
            panels=panels,
            center=None if center is None else tuple(np.atleast_1d(np.asarray(center, dtype=float)).tolist()),
            width=None if width is None else float(width),
            x0=None if x0 is None else tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist()),
        )

    @property
    def routes_to_point(self) -> bool:
        return self.kind == "field_at_point" or (self.kind == "kernel_functional" and self.kernel == "delta")


def quadrature_rule(region, order: int, panels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product composite Gauss-Legendre nodes (n, dim) and weights (n,)."""
    x, w = leggauss(order)
    axes_x, axes_w = [], []
    for lo, hi in region:
        edges = np.linspace(lo, hi, panels + 1)
        half = np.diff(edges) / 2.0
        mid = (edges[:-1] + edges[1:]) / 2.0
        axes_x.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        axes_w.append((half[:, None] * w[None, :]).ravel())
    nodes = np.stack([g.ravel() for g in np.meshgrid(*axes_x, indexing="ij")], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in np.meshgrid(*axes_w, indexing="ij")], axis=1), axis=1)
    return nodes, weights


def _kernel_values(spec: FunctionSpec, nodes: np.ndarray) -> np.ndarray:
    if spec.kernel == "constant":
        return np.ones(nodes.shape[0])
    r2 = np.sum((nodes - np.asarray(spec.center)) ** 2, axis=1)
    return np.exp(-r2 / (2.0 * spec.width**2))


def _point(spec: FunctionSpec) -> np.ndarray:
    return np.asarray(spec.x0, dtype=np.float64).reshape(1, -1)


def _spatial(model: FieldModel) -> None:
    if isinstance(model, ExplicitLinear):
        raise ModelError("spatial functions of the field need a LinearBasis or PointSources model")


def q_value(spec: FunctionSpec, model: FieldModel, theta) -> float:
    if spec.kind == "linear_combination":
        return float(np.asarray(spec.alpha) @ model.check_theta(theta))
    _spatial(model)
    if spec.routes_to_point:
        return float(model.field_at(_point(spec), theta)[0])
    nodes, weights = quadrature_rule(spec.region, spec.order, spec.panels)
    return float((weights * _kernel_values(spec, nodes)) @ model.field_at(nodes, theta))


def q_gradient(spec: FunctionSpec, model: FieldModel, theta) -> np.ndarray:
    """alpha = grad_theta q at ``theta``."""
    if spec.kind == "linear_combination":
        alpha = np.asarray(spec.alpha, dtype=np.float64)
        if alpha.size != model.param_dim:
            raise ModelError("alpha length differs from the number of model parameters")
        return alpha
    _spatial(model)
    if spec.routes_to_point:
        return model.jacobian_at(_point(spec), theta)[0]
    nodes, weights = quadrature_rule(spec.region, spec.order, spec.panels)
    return (weights * _kernel_values(spec, nodes)) @ model.jacobian_at(nodes, theta)


def build_problem(model: FieldModel, spec: FunctionSpec, theta_ref) -> EstimationProblem:
    return EstimationProblem(gradient_matrix(model, theta_ref), q_gradient(spec, model, theta_ref))


def build_interpolation(model: FieldModel, x0, theta_ref) -> EstimationProblem:
    """Instance for q = f(x0; theta), linearized at ``theta_ref``."""
    return build_problem(model, FunctionSpec.field_at(x0), theta_ref)


def build_functional(model: FieldModel, kernel: FunctionSpec, theta_ref) -> EstimationProblem:
    """Instance for q = int_R k(x) f(x; theta) dx; delta kernels route to interpolation."""
    if kernel.kind != "kernel_functional":
        raise ModelError("build_functional expects a kernel_functional spec")
    if kernel.kernel == "delta":
        return build_interpolation(model, kernel.x0, theta_ref)
    return build_problem(model, kernel, theta_ref)


# ---------------------------------------------------------------------------
# placement


@dataclass
class PlacementResult:
    """Best sensor layout found by local search (a local optimum, not global)."""

    positions: np.ndarray
    u_prime: float
    history: list[tuple[int, float]] = field(default_factory=list)
    budget_exhausted: bool = False
    best_restart: int = 0


def _placement_objective(model_family, spec, theta_ref):
    def objective(positions: np.ndarray) -> float:
        try:
            model = model_family(positions)
            problem = build_problem(model, spec, theta_ref)
            if not check_identifiability(problem.G, problem.alpha):
                return np.inf
            return solve_protocol(problem, canonical=False).u_prime
        except (ModelError, NonEstimableError):
            return np.inf
    return objective


def optimize_placement(
    model_family: Callable[[np.ndarray], FieldModel],
    q_spec: FunctionSpec,
    theta_ref,
    bounds,
    d: int,
    budget: int = 500,
    restarts: int = 4,
    seed: int = 0,
    min_step: float = 1e-10,
    max_init_tries: int = 100,
) -> PlacementResult:
    """Minimize u'(G(positions), alpha) over ``d`` sensors inside a box.

    Random coordinate search: each iteration perturbs one coordinate of one
    sensor by a Gaussian step; improvements are kept and widen the step,
    failures shrink it. Every restart starts from a fresh uniform draw.

    Parameters
    ----------
    model_family : callable
        Maps a (d, dim) position array to a field model.
    bounds : array_like, shape (dim, 2)
        Per-coordinate [lo, hi] box shared by all sensors.
    budget : int
        Iterations per restart.
    """
    bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("placement bounds must be finite with hi > lo")
    if restarts < 1 or budget < 0:
        raise ValueError("restarts must be >= 1 and budget >= 0")
    lo, hi = bounds[:, 0], bounds[:, 1]
    dim = bounds.shape[0]
    k = np.asarray(theta_ref).size
    if d < k:
        raise ValueError(f"placement needs at least as many sensors as parameters (d={d} < k={k})")
    objective = _placement_objective(model_family, q_spec, theta_ref)
    streams = np.random.SeedSequence(seed).spawn(restarts)

    best = None
    history: list[tuple[int, float]] = []
    iteration = 0
    exhausted = False
    for r, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        pos, val = None, np.inf
        for _ in range(max_init_tries):
            pos = lo + (hi - lo) * rng.random((d, dim))
            val = objective(pos)
            if np.isfinite(val):
                break
        if not np.isfinite(val):
            log.debug("restart %d found no identifiable starting layout", r)
            continue
        if best is None or val < best[1]:
            best = (pos.copy(), val, r)
        history.append((iteration, best[1]))
        step = 0.25 * (hi - lo)
        for _ in range(budget):
            iteration += 1
            i, j = rng.integers(d), rng.integers(dim)
            cand = pos.copy()
            cand[i, j] = np.clip(cand[i, j] + step[j] * rng.normal(), lo[j], hi[j])
            cval = objective(cand)
            if cval < val:
                pos, val = cand, cval
                step[j] = min(step[j] * 1.5, hi[j] - lo[j])
            else:
                step[j] *= 0.9
            if val < best[1]:
                best = (pos.copy(), val, r)
            history.append((iteration, best[1]))
            if np.all(step < min_step * (hi - lo)):
                break
        else:
            exhausted = exhausted or budget > 0
    if best is None:
        raise InconsistentConstraint("no identifiable sensor layout was found in the placement box")
    return PlacementResult(best[0], float(best[1]), history, exhausted, best[2])
