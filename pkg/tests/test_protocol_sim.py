import math

import numpy as np
import pytest

from sensornet.applications import FunctionSpec
from sensornet.errors import NewtonDivergence, PhaseWrap, RankDeficient
from sensornet.estimation import EstimationProblem, unentangled_weights
from sensornet.field_model import ExplicitLinear, PointSources, field_vector
from sensornet.protocol_sim import (
    ShotPlan,
    child_seeds,
    mse_convergence_sweep,
    phase_variance,
    recover_parameters,
    repeat_runs,
    simulate_ghz_linear,
    simulate_unentangled,
    stage_one_estimate,
    two_step_protocol,
)

TOY_G = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
THETA = np.array([0.3, -0.2])
F_TOY = TOY_G @ THETA
W0 = np.array([0.5, -0.5, 0.5])


def nonlinear_model():
    return PointSources(
        [[1.0, 2.0], [2.5, -1.5], [-1.0, -1.5]],
        [[0.0, 0.0], [2.0, 0.5]],
        mode="position",
        directions=[[1.0, 0.0], [0.0, 1.0]],
        charges=[1.0, 1.5],
    )


class TestShotPlan:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(t=0.0, shots=10), dict(t=1.0, shots=1), dict(t=1.0, shots=10, quadrature_split=1.0), dict(t=1.0, shots=10, phase_bound=-1.0)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ShotPlan(**kwargs)

    def test_split(self):
        plan = ShotPlan(1.0, 11, quadrature_split=0.3)
        assert plan.cos_shots + plan.sin_shots == 11 and plan.cos_shots == 3


class TestPhaseVariance:
    def test_zero_phase_even_split(self):
        assert phase_variance(0.0, 50, 50) == pytest.approx(2 / 100)

    def test_quarter_phase(self):
        assert phase_variance(math.pi / 4, 50, 50) == pytest.approx(1 / 100)


class TestGhz:
    def test_zero_phase(self):
        res = simulate_ghz_linear(np.zeros(3), W0, ShotPlan(1.0, 10_000, seed=1))
        assert abs(res.q_hat) <= 4 * math.sqrt(res.theoretical_variance)
        assert res.shots_used == 10_000

    def test_toy_mean_and_variance(self):
        plan = ShotPlan(1.0, 100_000, seed=12)
        agg, runs = repeat_runs(lambda pl: simulate_ghz_linear(F_TOY, W0, pl), plan, 1000, 0.3)
        stderr = math.sqrt(agg.empirical_variance / len(runs))
        assert abs(agg.q_hat - 0.3) <= 3 * stderr
        assert agg.empirical_variance / agg.theoretical_variance == pytest.approx(1.0, abs=0.10)
        # the accumulated phase is t * w_bar.f = 0.6, so the delta-method factor applies
        assert agg.theoretical_variance == pytest.approx(0.25 * phase_variance(0.6, 50_000, 50_000))

    def test_toy_zero_operating_point(self):
        res = simulate_ghz_linear(F_TOY, W0, ShotPlan(1.0, 100_000, seed=0), offset=float(W0 @ F_TOY))
        assert res.theoretical_variance == pytest.approx(0.25 * 2 / 100_000)

    def test_single_sensor(self):
        plan = ShotPlan(2.0, 100_000, seed=4)
        agg, _ = repeat_runs(lambda pl: simulate_ghz_linear([0.5], [1.0], pl), plan, 1000, 0.5)
        assert agg.empirical_variance / agg.theoretical_variance == pytest.approx(1.0, abs=0.10)
        at_zero = simulate_ghz_linear([0.5], [1.0], plan, offset=0.5)
        assert at_zero.theoretical_variance == pytest.approx(2 / (100_000 * 4))

    def test_weights_rescaled(self):
        plan = ShotPlan(1.0, 1000, seed=2)
        a = simulate_ghz_linear(F_TOY, 3 * W0, plan)
        b = simulate_ghz_linear(F_TOY, W0, plan)
        assert a.q_hat == pytest.approx(3 * b.q_hat)

    def test_prior_bound(self):
        with pytest.raises(PhaseWrap):
            simulate_ghz_linear(F_TOY, W0, ShotPlan(4.0, 100, phase_bound=1.0))

    def test_true_wrap(self):
        with pytest.raises(PhaseWrap):
            simulate_ghz_linear(F_TOY, W0, ShotPlan(6.0, 100))

    def test_zero_weights(self):
        with pytest.raises(ValueError):
            simulate_ghz_linear(F_TOY, np.zeros(3), ShotPlan(1.0, 100))

    def test_deterministic(self):
        plan = ShotPlan(1.0, 5000, seed=99)
        assert simulate_ghz_linear(F_TOY, W0, plan) == simulate_ghz_linear(F_TOY, W0, plan)

    def test_plugin_variance_tracks_theory(self):
        res = simulate_ghz_linear(F_TOY, W0, ShotPlan(1.0, 1_000_000, seed=3))
        assert res.empirical_variance == pytest.approx(res.theoretical_variance, rel=0.05)


class TestUnentangled:
    def test_zero_field(self):
        w = np.array([2 / 3, -1 / 3, 1 / 3])
        agg, runs = repeat_runs(lambda pl: simulate_unentangled(np.zeros(3), w, pl), ShotPlan(1.0, 10_000, seed=5), 200, 0.0)
        assert abs(agg.q_hat) <= 4 * math.sqrt(agg.empirical_variance / len(runs))

    def test_coefficient(self):
        w, coef = unentangled_weights(EstimationProblem(TOY_G, [1.0, 0.0]))
        res = simulate_unentangled(F_TOY, w, ShotPlan(1.0, 10_000), offset=F_TOY)
        assert res.theoretical_variance * 10_000 == pytest.approx(2 * coef)

    def test_single_sensor_matches_ghz(self):
        plan = ShotPlan(2.0, 4000, seed=17)
        assert simulate_unentangled([0.5], [1.0], plan) == simulate_ghz_linear([0.5], [1.0], plan)

    def test_entangled_advantage(self):
        # both protocols run at their operating point: the readout reference
        # comes from a prior estimate 1e-3 away from the truth
        prior = F_TOY + 1e-3
        w_un, _ = unentangled_weights(EstimationProblem(TOY_G, [1.0, 0.0]))
        plan = ShotPlan(1.0, 100_000, seed=21)
        ent, _ = repeat_runs(lambda pl: simulate_ghz_linear(F_TOY, W0, pl, offset=float(W0 @ prior)), plan, 2000, 0.3)
        une, _ = repeat_runs(lambda pl: simulate_unentangled(F_TOY, w_un, pl, offset=prior), plan, 2000, 0.3)
        mse_ent = ent.empirical_variance + ent.bias_estimate**2
        mse_une = une.empirical_variance + une.bias_estimate**2
        assert mse_une / mse_ent == pytest.approx(8 / 3, rel=0.20)

    def test_component_wrap(self):
        with pytest.raises(PhaseWrap):
            simulate_unentangled([0.1, 4.0], [1.0, 1.0], ShotPlan(1.0, 100))


class TestStageOne:
    def test_error_scales_with_time(self):
        model = ExplicitLinear(TOY_G)
        err = np.array([stage_one_estimate(model, THETA, 1e3, s) - THETA for s in range(30)])
        rms = math.sqrt(np.mean(err**2))
        assert rms * 1e3 <= 30.0

    def test_zero_noise_recovery(self):
        model = ExplicitLinear(TOY_G, [1.0, -1.0, 0.5])
        assert recover_parameters(model, field_vector(model, THETA)) == pytest.approx(THETA, abs=1e-14)

    def test_zero_noise_nonlinear(self):
        model = nonlinear_model()
        theta = np.array([0.2, -0.1])
        assert recover_parameters(model, field_vector(model, theta)) == pytest.approx(theta, abs=1e-10)

    def test_newton_divergence(self):
        model = nonlinear_model()
        with pytest.raises(NewtonDivergence):
            recover_parameters(model, field_vector(model, [0.2, -0.1]), max_iter=1, tol=0.0)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            stage_one_estimate(ExplicitLinear([[1.0, 1.0], [2.0, 2.0]]), [0.1, 0.1], 100.0, 0)

    def test_field_bound(self):
        with pytest.raises(PhaseWrap):
            stage_one_estimate(ExplicitLinear(TOY_G), THETA, 100.0, 0, field_bound=1e3)

    def test_deterministic(self):
        model = nonlinear_model()
        a = stage_one_estimate(model, [0.2, -0.1], 500.0, 3)
        b = stage_one_estimate(model, [0.2, -0.1], 500.0, 3)
        assert np.array_equal(a, b)


class TestTwoStep:
    def test_linear_model_equals_direct_protocol(self):
        model = ExplicitLinear(TOY_G)
        spec = FunctionSpec.linear([1.0, 0.0])
        plan = ShotPlan(1.0, 20_000, seed=8)
        res = two_step_protocol(model, spec, THETA, 400.0, 0.75, plan)
        theta_tilde = stage_one_estimate(model, THETA, 400.0**0.75, child_seeds(8, 3)[0], repetitions=plan.shots)
        t2 = 400.0 - 400.0**0.75
        direct = simulate_ghz_linear(F_TOY, W0, plan.with_(t=t2, seed=child_seeds(8, 3)[1]), offset=float(theta_tilde[0]))
        assert res.q_hat == pytest.approx(direct.q_hat, abs=1e-14)
        assert abs(res.bias_estimate) <= 1e-15

    def test_nonlinear_run(self):
        model = nonlinear_model()
        spec = FunctionSpec.field_at([0.8, 0.9])
        res = two_step_protocol(model, spec, [0.2, -0.1], 1000.0, 0.75, ShotPlan(1.0, 10_000, seed=1))
        assert res.bias_estimate != 0.0
        assert res.theoretical_variance > 0

    @pytest.mark.parametrize("p", [0.5, 1.0, 0.2])
    def test_exponent_range(self, p):
        with pytest.raises(ValueError):
            two_step_protocol(ExplicitLinear(TOY_G), FunctionSpec.linear([1.0, 0.0]), THETA, 100.0, p, ShotPlan(1.0, 100))


class TestSweep:
    def test_linear_flat_in_stage_two_time(self):
        model = ExplicitLinear(TOY_G)
        rows = mse_convergence_sweep(model, FunctionSpec.linear([1.0, 0.0]), THETA, [100, 1000, 10000], 0.75,
                                     ShotPlan(1.0, 100_000, seed=2), repetitions=200)
        vals = np.array([r.mse_t2_stage2_per_shot for r in rows])
        # 200 squared Gaussians: relative spread about 10%
        assert vals.max() / vals.min() <= 1.5
        assert np.all(vals <= rows[0].reference * 1.4)
        assert all(r.bias_sq == 0.0 for r in rows)

    def test_nonlinear_monotone(self):
        rows = mse_convergence_sweep(nonlinear_model(), FunctionSpec.field_at([0.8, 0.9]), [0.2, -0.1], [100, 1000, 10000],
                                     0.75, ShotPlan(1.0, 100_000, seed=0), repetitions=100)
        vals = [r.mse_t2_per_shot for r in rows]
        assert vals[0] > vals[1] > vals[2]

    def test_requires_increasing(self):
        with pytest.raises(ValueError):
            mse_convergence_sweep(ExplicitLinear(TOY_G), FunctionSpec.linear([1.0, 0.0]), THETA, [100, 50], 0.75, ShotPlan(1.0, 100))
