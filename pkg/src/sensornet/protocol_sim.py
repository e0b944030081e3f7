"""Monte-Carlo simulation of the entangled and unentangled estimation protocols.

The GHZ protocol is simulated through its exact reduction: after the
partial time evolution the d-qubit state only carries one relative phase
phi = t * (w_bar . f - reference), so each shot is a single biased coin.
Every run splits its shots between the parity (cos phi) and the
phase-advanced parity (sin phi) and estimates phi = atan2(s_hat, c_hat).

Variance convention
-------------------
For n_c cos shots and n_s sin shots the delta-method variance of the
atan2 estimator is::

    var(phi_hat) = sin(phi)**4 / n_c + cos(phi)**4 / n_s

which equals 2/mu at phi = 0 with an even split. A known ``offset`` (a
prior value of w.f implemented as a control phase) keeps the operating
point near zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .applications import FunctionSpec, q_gradient, q_value
from .errors import (
    InconsistentConstraint,
    ModelError,
    NewtonDivergence,
    NonEstimableError,
    PhaseWrap,
    RankDeficient,
)
from .estimation import EstimationProblem, check_identifiability, solve_protocol
from .field_model import FieldModel, field_vector, gradient_matrix

__all__ = [
    "ShotPlan",
    "ProtocolResult",
    "SweepRow",
    "phase_variance",
    "simulate_ghz_linear",
    "simulate_unentangled",
    "repeat_runs",
    "child_seeds",
    "stage_one_estimate",
    "recover_parameters",
    "two_step_protocol",
    "mse_convergence_sweep",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShotPlan:
    """Evolution time per shot, number of shots and the master seed.

    ``phase_bound`` is an optional prior bound on |w_bar . f - reference|;
    a plan whose ``t * phase_bound`` reaches pi is rejected up front.
    """

    t: float
    shots: int
    seed: int = 0
    quadrature_split: float = 0.5
    phase_bound: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise ValueError("t must be positive and finite")
        if int(self.shots) != self.shots or self.shots < 2:
            raise ValueError("shots must be an integer >= 2")
        if not 0 < self.quadrature_split < 1:
            raise ValueError("quadrature_split must lie strictly between 0 and 1")
        if self.phase_bound is not None and not self.phase_bound >= 0:
            raise ValueError("phase_bound must be non-negative")

    @property
    def cos_shots(self) -> int:
        n = int(round(self.shots * self.quadrature_split))
        return min(max(n, 1), self.shots - 1)

    @property
    def sin_shots(self) -> int:
        return self.shots - self.cos_shots

    def with_(self, **changes) -> "ShotPlan":
        return replace(self, **changes)


@dataclass(frozen=True)
class ProtocolResult:
    q_hat: float
    empirical_variance: float
    theoretical_variance: float
    bias_estimate: float
    shots_used: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepRow:
    """One line of the convergence table.

    ``mse_t2`` is M*t**2; the ``*_per_shot`` columns multiply by mu so they
    can be compared with 2*u'**2 (``reference``). ``mse_t2_stage2_per_shot``
    uses the stage-2 time t - t**p instead of t.
    """

    t: float
    t1: float
    t2: float
    mse: float
    mse_t2: float
    mse_t2_per_shot: float
    mse_t2_stage2_per_shot: float
    bias_sq: float
    reference: float


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def child_seeds(seed: int, n: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def phase_variance(phi, n_cos: int, n_sin: int):
    """Delta-method variance of atan2(s_hat, c_hat) at the true phase ``phi``."""
    return np.sin(phi) ** 4 / n_cos + np.cos(phi) ** 4 / n_sin


def _measure_phase(phi, n_cos: int, n_sin: int, rng: np.random.Generator):
    """Sample both quadratures; return (phi_hat, plug-in variance)."""
    c = 2.0 * rng.binomial(n_cos, (1.0 + np.cos(phi)) / 2.0) / n_cos - 1.0
    s = 2.0 * rng.binomial(n_sin, (1.0 + np.sin(phi)) / 2.0) / n_sin - 1.0
    r2 = c * c + s * s
    if r2 > 0:
        plug = (s * s * (1.0 - c * c) / n_cos + c * c * (1.0 - s * s) / n_sin) / (r2 * r2)
    else:
        # both quadratures averaged to zero: no phase information in this run
        plug = math.inf
    return float(np.arctan2(s, c)), plug


def _check_prior(t: float, bound: float | None) -> None:
    if bound is not None and t * bound >= math.pi:
        raise PhaseWrap(f"prior bound allows phases up to {t * bound:.6g} >= pi")


def simulate_ghz_linear(f, w, plan: ShotPlan, offset: float = 0.0) -> ProtocolResult:
    """Estimate w.f with one GHZ state per shot.

    Parameters
    ----------
    f : array_like, shape (d,)
        Local field amplitudes.
    w : array_like, shape (d,)
        Weights; rescaled internally to w / |w|_inf.
    offset : float
        Known reference value for w.f subtracted as a control phase.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if f.shape != w.shape:
        raise ValueError("f and w must have the same length")
    s = float(np.max(np.abs(w))) if w.size else 0.0
    if s == 0:
        raise ValueError("weight vector must be non-zero")
    _check_prior(plan.t, plan.phase_bound)
    ref = offset / s
    phi = plan.t * (float((w / s) @ f) - ref)
    if abs(phi) >= math.pi:
        raise PhaseWrap(f"accumulated phase {phi:.6g} is outside (-pi, pi)")
    rng = _streams(plan.seed, 1)[0]
    n_c, n_s = plan.cos_shots, plan.sin_shots
    phi_hat, plug = _measure_phase(phi, n_c, n_s, rng)
    q_hat = s * float(phi_hat) / plan.t + offset
    theo = s**2 * float(phase_variance(phi, n_c, n_s)) / plan.t**2
    emp = s**2 * float(plug) / plan.t**2
    return ProtocolResult(q_hat, emp, theo, 0.0, plan.shots)


def simulate_unentangled(f, w, plan: ShotPlan, offset=None) -> ProtocolResult:
    """Estimate w.f by measuring every f_i on its own qubit for the full time.

    ``offset`` is an optional per-sensor reference vector for f.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if f.shape != w.shape:
        raise ValueError("f and w must have the same length")
    if not np.any(w != 0):
        raise ValueError("weight vector must be non-zero")
    ref = np.zeros_like(f) if offset is None else np.asarray(offset, dtype=np.float64).reshape(f.shape)
    _check_prior(plan.t, plan.phase_bound)
    phi = plan.t * (f - ref)
    if np.any(np.abs(phi) >= math.pi):
        raise PhaseWrap("a sensor phase is outside (-pi, pi)")
    n_c, n_s = plan.cos_shots, plan.sin_shots
    f_hat = np.empty_like(f)
    plug = np.empty_like(f)
    for i, rng in enumerate(_streams(plan.seed, f.size)):
        ph, pv = _measure_phase(phi[i], n_c, n_s, rng)
        f_hat[i] = float(ph) / plan.t + ref[i]
        plug[i] = pv
    q_hat = float(w @ f_hat)
    theo = float(np.sum(w**2 * phase_variance(phi, n_c, n_s))) / plan.t**2
    emp = float(np.sum(w**2 * plug)) / plan.t**2
    return ProtocolResult(q_hat, emp, theo, 0.0, plan.shots)


def repeat_runs(
    run: Callable[[ShotPlan], ProtocolResult],
    plan: ShotPlan,
    repetitions: int,
    q_true: float,
) -> tuple[ProtocolResult, list[ProtocolResult]]:
    """Run ``run`` with independent derived seeds and aggregate.

    Returns the aggregate (sample mean of q_hat, sample variance across
    runs, mean theoretical variance, mean(q_hat) - q_true) and the
    individual results in run order.
    """
    if repetitions < 2:
        raise ValueError("at least two repetitions are needed for a sample variance")
    results = [run(plan.with_(seed=s)) for s in child_seeds(plan.seed, repetitions)]
    q = np.array([r.q_hat for r in results])
    theo = float(np.mean([r.theoretical_variance for r in results]))
    agg = ProtocolResult(float(q.mean()), float(q.var(ddof=1)), theo, float(q.mean() - q_true), plan.shots)
    return agg, results


# ---------------------------------------------------------------------------
# stage 1: per-sensor phase estimation with doubling interrogation times


def recover_parameters(
    model: FieldModel,
    f_tilde,
    initial_guess=None,
    max_iter: int = 100,
    tol: float = 1e-12,
) -> np.ndarray:
    """Parameters best explaining ``f_tilde`` in the least-squares sense.

    Linear models use the minimum-norm least-squares solution. Nonlinear
    models run damped Gauss-Newton from ``initial_guess`` (default: the
    model's own guess).
    """
    f_tilde = np.asarray(f_tilde, dtype=np.float64).reshape(-1)
    k = model.param_dim
    if model.is_linear:
        G = np.asarray(gradient_matrix(model, np.zeros(k)))
        theta, *_ = np.linalg.lstsq(G, f_tilde - model.offset(), rcond=None)
        return theta
    theta = np.array(model.initial_guess if initial_guess is None else initial_guess, dtype=np.float64)

    def residual(th):
        return field_vector(model, th) - f_tilde

    try:
        r = residual(theta)
        cost = r @ r
        for _ in range(max_iter):
            J = np.asarray(gradient_matrix(model, theta))
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
            lam = 1.0
            for _ in range(40):
                cand = theta + lam * step
                try:
                    rc = residual(cand)
                except ModelError:
                    rc = None
                if rc is not None and rc @ rc <= cost:
                    break
                lam *= 0.5
            else:
                # No decrease along the Gauss-Newton direction: stationary.
                return theta
            theta, r, cost = cand, rc, rc @ rc
            if np.linalg.norm(lam * step) <= tol * (1.0 + np.linalg.norm(theta)):
                return theta
    except (ModelError, np.linalg.LinAlgError) as exc:
        raise NewtonDivergence(f"Gauss-Newton failed: {exc}") from exc
    raise NewtonDivergence(f"Gauss-Newton did not converge in {max_iter} iterations")


def _round_schedule(t1: float, shots_per_round: int, max_rounds: int) -> tuple[int, float]:
    rounds = max(1, min(max_rounds, math.ceil(math.log2(t1)) if t1 > 1 else 1))
    tau0 = t1 / (shots_per_round * (2**rounds - 1))
    return rounds, tau0


def estimate_fields(
    f,
    t1: float,
    seed: int,
    *,
    repetitions: int = 1,
    shots_per_round: int = 16,
    max_rounds: int = 30,
    field_bound: float | None = None,
) -> np.ndarray:
    """Per-sensor phase estimation of ``f`` with doubling interrogation times.

    Round j interrogates each sensor for tau_j = tau_0 * 2**j with the same
    number of shots, so the time per repetition sums to ``t1``. Each round's
    readout reference is the previous round's estimate, which keeps the
    phase inside (-pi, pi) as long as that estimate is good to pi/tau_j.
    ``repetitions`` independent series are pooled shot by shot.
    """
    if not t1 > 0:
        raise ValueError("t1 must be positive")
    if shots_per_round < 2:
        raise ValueError("shots_per_round must be >= 2")
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    rounds, tau0 = _round_schedule(t1, shots_per_round, max_rounds)
    _check_prior(tau0, field_bound)
    if np.any(np.abs(tau0 * f) >= math.pi):
        raise PhaseWrap("field too large for the first stage-one round")
    n = shots_per_round * repetitions
    n_c = n // 2
    n_s = n - n_c
    out = np.empty_like(f)
    for i, rng in enumerate(_streams(seed, f.size)):
        est = 0.0
        for j in range(rounds):
            tau = tau0 * 2**j
            phi_hat, _ = _measure_phase(tau * (f[i] - est), n_c, n_s, rng)
            est = est + float(phi_hat) / tau
        out[i] = est
    return out


def stage_one_estimate(
    model: FieldModel,
    theta_true,
    t1: float,
    seed: int,
    *,
    repetitions: int = 1,
    shots_per_round: int = 16,
    max_rounds: int = 30,
    field_bound: float | None = None,
    initial_guess=None,
) -> np.ndarray:
    """Rough parameter estimate theta_tilde with error O(1/t1)."""
    theta_true = model.check_theta(theta_true)
    G = np.asarray(gradient_matrix(model, theta_true))
    if np.linalg.matrix_rank(G) < model.param_dim:
        raise RankDeficient("gradient matrix is rank deficient at the true parameters")
    f_tilde = estimate_fields(
        field_vector(model, theta_true),
        t1,
        seed,
        repetitions=repetitions,
        shots_per_round=shots_per_round,
        max_rounds=max_rounds,
        field_bound=field_bound,
    )
    return recover_parameters(model, f_tilde, initial_guess)


# ---------------------------------------------------------------------------
# two-step protocol


def _linearized_instance(model, q_spec, theta_tilde):
    G = np.asarray(gradient_matrix(model, theta_tilde))
    alpha = q_gradient(q_spec, model, theta_tilde)
    if not check_identifiability(G, alpha):
        raise InconsistentConstraint("target gradient is not in the row space of G at the stage-one estimate")
    w = solve_protocol(EstimationProblem(G, alpha)).w0
    return G, alpha, w


def two_step_protocol(
    model: FieldModel,
    q_spec: FunctionSpec,
    theta_true,
    t: float,
    p: float,
    plan: ShotPlan,
    *,
    shots_per_round: int = 16,
    max_rounds: int = 30,
    field_bound: float | None = None,
    initial_guess=None,
) -> ProtocolResult:
    """Estimate a nonlinear q(theta) with total time ``t`` per shot.

    Stage 1 spends t1 = t**p on theta_tilde. Stage 2 measures the linear
    combination w.(f - C) for time t - t1, where C are the offsets of the
    sensor fields' linearization at theta_tilde, with the control phase
    set to its predicted value w.G(theta_tilde) theta_tilde.

    ``bias_estimate`` is the noise-free linearization error of the run.
    """
    if not 0.5 < p < 1:
        raise ValueError("p must lie strictly between 1/2 and 1")
    t1 = t**p
    t2 = t - t1
    if not t2 > 0:
        raise ValueError("t must exceed t**p (t > 1)")
    theta_true = model.check_theta(theta_true)
    seeds = child_seeds(plan.seed, 3)
    stage_kw = dict(
        repetitions=plan.shots,
        shots_per_round=shots_per_round,
        max_rounds=max_rounds,
        field_bound=field_bound,
        initial_guess=initial_guess,
    )
    for attempt, s1 in enumerate((seeds[0], seeds[2])):
        theta_tilde = stage_one_estimate(model, theta_true, t1, s1, **stage_kw)
        try:
            G, alpha, w = _linearized_instance(model, q_spec, theta_tilde)
            break
        except NonEstimableError:
            if attempt == 1:
                raise
            log.debug("stage-one estimate not estimable; repeating stage one")
    f_true = field_vector(model, theta_true)
    C = field_vector(model, theta_tilde) - G @ theta_tilde
    offset = float(w @ (G @ theta_tilde))
    res = simulate_ghz_linear(f_true - C, w, plan.with_(t=t2, seed=seeds[1], phase_bound=None), offset)
    base = q_value(q_spec, model, theta_tilde) - float(alpha @ theta_tilde)
    q_hat = base + res.q_hat
    bias = base + float(w @ (f_true - C)) - q_value(q_spec, model, theta_true)
    return ProtocolResult(q_hat, res.empirical_variance, res.theoretical_variance, bias, plan.shots)


def mse_convergence_sweep(
    model: FieldModel,
    q_spec: FunctionSpec,
    theta_true,
    t_list: Sequence[float],
    p: float,
    plan: ShotPlan,
    repetitions: int = 100,
    **stage_kw,
) -> list[SweepRow]:
    """Mean squared error of the two-step protocol for each total time."""
    t_list = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("t_list must be strictly increasing")
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    theta_true = model.check_theta(theta_true)
    q_true = q_value(q_spec, model, theta_true)
    G = gradient_matrix(model, theta_true)
    u_prime = solve_protocol(EstimationProblem(G, q_gradient(q_spec, model, theta_true))).u_prime
    reference = 2.0 * u_prime**2
    rows = []
    for t, seed in zip(t_list, child_seeds(plan.seed, len(t_list))):
        err, bias = [], []
        for s in child_seeds(seed, repetitions):
            r = two_step_protocol(model, q_spec, theta_true, t, p, plan.with_(seed=s), **stage_kw)
            err.append(r.q_hat - q_true)
            bias.append(r.bias_estimate)
        mse = float(np.mean(np.square(err)))
        t1 = t**p
        t2 = t - t1
        rows.append(
            SweepRow(
                t=t,
                t1=t1,
                t2=t2,
                mse=mse,
                mse_t2=mse * t * t,
                mse_t2_per_shot=mse * t * t * plan.shots,
                mse_t2_stage2_per_shot=mse * t2 * t2 * plan.shots,
                bias_sq=float(np.mean(np.square(bias))),
                reference=reference,
            )
        )
    return rows
