import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sensornet.estimation import EstimationProblem, solve_protocol
from sensornet.fisher import build_dual_basis, first_row_leak, ghz_rank_one_fisher, transform_fisher

alphas = st.integers(1, 6).flatmap(
    lambda k: arrays(np.float64, k, elements=st.floats(-5, 5)).filter(lambda a: np.max(np.abs(a)) > 1e-3)
)


class TestDualBasis:
    def test_unit_alpha(self):
        b = build_dual_basis([1.0, 0.0])
        assert np.array_equal(b.J, np.eye(2))
        assert b.J_inv[:, 0] == pytest.approx([1.0, 0.0])

    def test_permutation(self):
        b = build_dual_basis([0.0, 2.0])
        assert list(b.perm) == [1, 0]
        assert b.J_inv_perm[:, 0] == pytest.approx([0.5, 0.0])
        assert b.a1 == 2.0

    def test_ties_take_lowest_index(self):
        assert build_dual_basis([1.0, -1.0, 1.0]).perm[0] == 0

    def test_zero(self):
        with pytest.raises(ValueError):
            build_dual_basis([0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(alphas)
    def test_invariants(self, alpha):
        b = build_dual_basis(alpha)
        k = alpha.size
        assert np.max(np.abs(b.J @ b.J_inv - np.eye(k))) <= 1e-10
        assert np.array_equal(b.J[0], alpha)
        assert np.abs(alpha[b.perm[0]]) == np.max(np.abs(alpha))


class TestTransform:
    def test_identity(self):
        assert transform_fisher(np.eye(3), build_dual_basis([1.0, 0.0, 0.0])) == pytest.approx(np.eye(3))

    def test_diagonal_leaks(self):
        Fq = transform_fisher(np.diag([1.0, 2.0]), build_dual_basis([1.0, 1.0]))
        assert first_row_leak(Fq) > 0.5

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            transform_fisher([[1.0, 1.0], [0.0, 1.0]], build_dual_basis([1.0, 0.0]))

    @settings(max_examples=100, deadline=None)
    @given(alphas, st.floats(0.1, 10.0))
    def test_rank_one_no_leak(self, alpha, c):
        b = build_dual_basis(alpha)
        F = c * np.outer(alpha, alpha)
        Fq = transform_fisher(F, b)
        assert first_row_leak(Fq) <= 1e-9 * c * max(1.0, np.max(np.abs(F)))
        l11 = F[b.perm[0], b.perm[0]]
        assert Fq[0, 0] == pytest.approx(l11 / b.a1**2, rel=1e-9)
        assert np.max(np.abs(Fq - Fq.T)) <= 1e-10


class TestGhzFisher:
    def test_toy(self):
        G = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        w = solve_protocol(EstimationProblem(G, [1.0, 0.0])).w0
        assert ghz_rank_one_fisher(G, w, 2.0) == pytest.approx(4.0 * np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_zero_weights(self):
        assert np.all(ghz_rank_one_fisher(np.eye(2), [0.0, 0.0], 1.0) == 0)

    def test_no_leak_after_transform(self):
        rng = np.random.default_rng(8)
        G = rng.normal(size=(5, 3))
        alpha = rng.normal(size=3)
        w = solve_protocol(EstimationProblem(G, alpha)).w0
        Fq = transform_fisher(ghz_rank_one_fisher(G, w, 3.0), build_dual_basis(alpha))
        assert first_row_leak(Fq) <= 1e-9 * np.max(np.abs(Fq))

    def test_bad_time(self):
        with pytest.raises(ValueError):
            ghz_rank_one_fisher(np.eye(2), [1.0, 0.0], 0.0)
