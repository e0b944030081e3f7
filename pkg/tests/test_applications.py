import numpy as np
import pytest

from sensornet.applications import (
    FunctionSpec,
    build_functional,
    build_interpolation,
    optimize_placement,
    q_gradient,
    q_value,
    quadrature_rule,
)
from sensornet.errors import InconsistentConstraint, ModelError
from sensornet.estimation import EstimationProblem, solve_protocol
from sensornet.field_model import ExplicitLinear, LinearBasis, PointSources, gradient_matrix, monomials


def line_model(positions):
    return LinearBasis(positions, monomials(1))


def two_sensor_u_prime(x1, x2, x0=0.5):
    # G = [[1, x1], [1, x2]] is square, so w is unique: w = G^-T alpha
    G = np.array([[1.0, x1], [1.0, x2]])
    w = np.linalg.solve(G.T, [1.0, x0])
    return np.max(np.abs(w))


class TestInterpolation:
    def test_midpoint(self):
        p = build_interpolation(line_model([0.0, 1.0]), 0.5, [0.0, 0.0])
        assert p.alpha == pytest.approx([1.0, 0.5])
        assert p.G == pytest.approx(np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_at_a_sensor(self):
        p = build_interpolation(line_model([0.2, 0.7]), 0.2, [0.0, 0.0])
        assert solve_protocol(p).u_prime <= 1.0 + 1e-12

    @pytest.mark.parametrize("x0", [-0.5, 1.3, 3.0])
    def test_extrapolation(self, x0):
        p = build_interpolation(line_model([0.0, 1.0]), x0, [0.0, 0.0])
        assert solve_protocol(p).u_prime >= 1.0 - 1e-12

    def test_source_collision(self):
        m = PointSources([[1.0, 1.0], [2.0, 0.0]], [[0.0, 0.0]])
        with pytest.raises(ModelError):
            build_interpolation(m, [0.0, 0.0], [1.0])

    def test_explicit_model_has_no_space(self):
        with pytest.raises(ModelError):
            build_interpolation(ExplicitLinear(np.eye(2)), 0.5, [0.0, 0.0])

    def test_nonlinear_depends_on_theta_ref(self):
        m = PointSources([[1.0, 1.0], [2.0, -1.0]], [[0.0, 0.0], [3.0, 0.0]], mode="position")
        a = build_interpolation(m, [1.5, 0.5], [0.0, 0.0])
        b = build_interpolation(m, [1.5, 0.5], [0.2, -0.1])
        assert not np.allclose(a.alpha, b.alpha)
        assert b.G == pytest.approx(np.asarray(gradient_matrix(m, [0.2, -0.1])))


class TestFunctional:
    def test_constant_kernel(self):
        spec = FunctionSpec.functional("constant", region=[(0.0, 1.0)], order=2)
        p = build_functional(line_model([0.0, 1.0]), spec, [0.0, 0.0])
        assert p.alpha == pytest.approx([1.0, 0.5], abs=1e-15)

    def test_delta_routes_to_interpolation(self):
        m = line_model([0.0, 1.0])
        a = build_functional(m, FunctionSpec.functional("delta", x0=0.3), [0.0, 0.0])
        b = build_interpolation(m, 0.3, [0.0, 0.0])
        assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.G, b.G)

    def test_gaussian_refinement(self):
        m = LinearBasis([0.0, 0.5, 1.0], monomials(3))
        lo = FunctionSpec.functional("gaussian", region=[(0.0, 1.0)], order=8, center=0.4, width=0.5)
        hi = FunctionSpec.functional("gaussian", region=[(0.0, 1.0)], order=16, center=0.4, width=0.5)
        a = q_gradient(lo, m, np.zeros(4))
        b = q_gradient(hi, m, np.zeros(4))
        assert np.max(np.abs(a - b)) <= 1e-10

    @pytest.mark.parametrize("panels", [1, 3])
    def test_order_doubling_2d(self, panels):
        m = LinearBasis([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], monomials(2, 2))
        specs = [
            FunctionSpec.functional("gaussian", region=[(0.0, 1.0), (0.0, 2.0)], order=n, panels=panels, center=(0.5, 0.5), width=0.6)
            for n in (10, 20)
        ]
        a, b = (q_gradient(s, m, np.zeros(6)) for s in specs)
        assert np.max(np.abs(a - b)) <= 1e-8

    def test_quadrature_integrates_polynomials(self):
        nodes, weights = quadrature_rule([(0.0, 2.0)], order=3, panels=2)
        assert weights @ nodes[:, 0] ** 5 == pytest.approx(2.0**6 / 6)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kernel="constant", region=[(0.0, np.inf)]),
            dict(kernel="constant", region=[(1.0, 0.0)]),
            dict(kernel="constant", region=[(0.0, 1.0)], order=1),
            dict(kernel="gaussian", region=[(0.0, 1.0)]),
            dict(kernel="delta"),
            dict(kernel="cosine", region=[(0.0, 1.0)]),
        ],
    )
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ModelError):
            FunctionSpec.functional(**kwargs)

    def test_q_value_is_linear_for_linear_models(self):
        m = line_model([0.0, 1.0])
        spec = FunctionSpec.functional("constant", region=[(0.0, 2.0)], order=4)
        theta = np.array([0.3, -1.2])
        assert q_value(spec, m, theta) == pytest.approx(q_gradient(spec, m, theta) @ theta)


class TestPlacement:
    @staticmethod
    def grid_oracle(n=100):
        xs = np.linspace(0.0, 1.0, n)
        best = np.inf
        for a in xs:
            for b in xs:
                if a != b:
                    best = min(best, two_sensor_u_prime(a, b))
        return best

    def test_matches_grid_oracle(self):
        res = optimize_placement(line_model, FunctionSpec.field_at(0.5), [0.0, 0.0], [[0.0, 1.0]], 2, budget=400, restarts=4, seed=0)
        assert res.u_prime <= self.grid_oracle() + 1e-6
        assert res.u_prime <= 0.5 + 1e-9

    def test_history_monotone(self):
        res = optimize_placement(line_model, FunctionSpec.field_at(0.3), [0.0, 0.0], [[0.0, 1.0]], 2, budget=200, restarts=3, seed=4)
        values = [v for _, v in res.history]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert [i for i, _ in res.history] == sorted(i for i, _ in res.history)

    def test_recomputed_value(self):
        res = optimize_placement(line_model, FunctionSpec.field_at(0.8), [0.0, 0.0], [[0.0, 1.0]], 3, budget=150, restarts=2, seed=9)
        p = EstimationProblem(gradient_matrix(line_model(res.positions), [0.0, 0.0]), [1.0, 0.8])
        assert solve_protocol(p).u_prime == pytest.approx(res.u_prime, abs=1e-10)
        assert np.all((res.positions >= 0.0) & (res.positions <= 1.0))

    def test_zero_budget(self):
        res = optimize_placement(line_model, FunctionSpec.field_at(0.5), [0.0, 0.0], [[0.0, 1.0]], 2, budget=0, restarts=1, seed=3)
        start = np.random.default_rng(np.random.SeedSequence(3).spawn(1)[0]).random((2, 1))
        assert np.array_equal(res.positions, start)
        assert res.u_prime == pytest.approx(two_sensor_u_prime(*start[:, 0]))

    def test_target_inside_box_never_worse_than_one(self):
        res = optimize_placement(line_model, FunctionSpec.field_at(0.25), [0.0, 0.0], [[0.0, 1.0]], 2, budget=300, restarts=2, seed=1)
        assert res.u_prime <= 1.0 + 1e-9

    def test_deterministic(self):
        args = (line_model, FunctionSpec.field_at(0.5), [0.0, 0.0], [[0.0, 1.0]], 2)
        a = optimize_placement(*args, budget=50, restarts=2, seed=5)
        b = optimize_placement(*args, budget=50, restarts=2, seed=5)
        assert np.array_equal(a.positions, b.positions) and a.history == b.history

    def test_too_few_sensors(self):
        with pytest.raises(ValueError):
            optimize_placement(line_model, FunctionSpec.field_at(0.5), [0.0, 0.0], [[0.0, 1.0]], 1)

    def test_unbounded_box(self):
        with pytest.raises(ValueError):
            optimize_placement(line_model, FunctionSpec.field_at(0.5), [0.0, 0.0], [[0.0, np.inf]], 2)

    def test_nothing_identifiable(self):
        # a constant-only basis cannot see the x-component the target needs
        spec = FunctionSpec.linear([0.0, 1.0])
        family = lambda pos: ExplicitLinear(np.column_stack([np.ones(len(pos)), np.zeros(len(pos))]))
        with pytest.raises(InconsistentConstraint):
            optimize_placement(family, spec, [0.0, 0.0], [[0.0, 1.0]], 2, budget=5, restarts=2, max_init_tries=3)
