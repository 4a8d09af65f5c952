import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glocal.errors import ShapeError
from glocal.local import ModulationField
from glocal.transport import cost_matrix, row_normalize, sinkhorn, warp_modulation

from oracles import birkhoff_vertices, transport_lp_2x2


class TestCostMatrix:
    def test_parallel(self):
        F = np.random.default_rng(0).uniform(0.5, 1, (3, 2, 2))
        C = cost_matrix(F, 2.0 * F)
        assert np.abs(np.diag(C)).max() < 1e-6

    def test_orthogonal(self):
        Fs = np.zeros((2, 1, 2))
        Fs[0, 0, 0] = 1
        Fs[0, 0, 1] = 1
        Fo = np.zeros((2, 1, 2))
        Fo[1] = 1
        np.testing.assert_allclose(cost_matrix(Fs, Fo), 1.0)

    def test_antiparallel(self):
        F = np.random.default_rng(1).normal(size=(3, 2, 3))
        C = cost_matrix(F, -F)
        np.testing.assert_allclose(np.diag(C), 2.0, atol=1e-6)

    def test_range_and_self_diagonal(self):
        F = np.random.default_rng(2).normal(size=(4, 3, 3))
        C = cost_matrix(F, F)
        assert C.min() >= 0 and C.max() <= 2
        assert np.abs(np.diag(C)).max() < 1e-6

    def test_zero_vectors(self):
        C = cost_matrix(np.zeros((2, 2, 2)), np.ones((2, 2, 2)))
        np.testing.assert_allclose(C, 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cost_matrix(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


class TestSinkhorn:
    def test_single_mass(self):
        plan = sinkhorn(np.array([[0.7]]), [1.0], [1.0])
        np.testing.assert_allclose(plan.matrix, [[1.0]])

    def test_constant_cost_product(self):
        plan = sinkhorn(np.full((2, 2), 0.3))
        np.testing.assert_allclose(plan.matrix, 0.25, atol=1e-7)

    def test_anti_diagonal_lp(self):
        C = np.array([[0.0, 1.0], [1.0, 0.0]])
        plan = sinkhorn(C, eps_reg=0.01)
        opt, P = transport_lp_2x2(C, [0.5, 0.5], [0.5, 0.5])
        np.testing.assert_allclose(plan.matrix, P, atol=1e-3)
        assert abs(plan.cost(C) - opt) <= 0.02 * max(abs(opt), 1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_lp_2x2_random(self, seed):
        rng = np.random.default_rng(seed)
        C = rng.uniform(0, 2, (2, 2))
        a = rng.dirichlet([1, 1])
        b = rng.dirichlet([1, 1])
        plan = sinkhorn(C, a, b, eps_reg=0.005, max_iters=20000)
        opt, _ = transport_lp_2x2(C, a, b)
        # entropic cost exceeds the LP value by at most eps * log(n*m) up to tolerance
        assert opt - 1e-6 <= plan.cost(C) <= opt + 0.005 * np.log(4) + 1e-5

    def test_permutation_cost_approaches_assignment(self):
        rng = np.random.default_rng(6)
        C = rng.uniform(0, 1, (4, 4))
        best = min(float((P * C).sum()) for P in birkhoff_vertices(4))
        plan = sinkhorn(C, eps_reg=0.005, max_iters=20000)
        assert best - 1e-6 <= plan.cost(C) <= best + 0.005 * np.log(16)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 64))
    def test_balanced_marginals(self, seed, n):
        rng = np.random.default_rng(seed)
        C = rng.uniform(0, 2, (n, n))
        plan = sinkhorn(C, max_iters=5000, tol=1e-6)
        P = plan.matrix.astype(np.float64)
        assert plan.converged
        assert np.all(P >= 0)
        assert np.abs(P.sum(axis=1) - 1 / n).max() < 1e-6
        assert np.abs(P.sum(axis=0) - 1 / n).max() < 1e-6
        assert abs(P.sum() - 1.0) < 1e-6

    def test_non_uniform_marginals(self):
        rng = np.random.default_rng(7)
        a = rng.dirichlet(np.ones(6))
        b = rng.dirichlet(np.ones(6))
        plan = sinkhorn(rng.uniform(0, 1, (6, 6)), a, b, eps_reg=0.02, max_iters=5000)
        P = plan.matrix.astype(np.float64)
        np.testing.assert_allclose(P.sum(axis=1), a, atol=1e-6)
        np.testing.assert_allclose(P.sum(axis=0), b, atol=1e-6)

    def test_zero_mass_rows(self):
        a = np.array([0.5, 0.0, 0.5])
        plan = sinkhorn(np.random.default_rng(8).uniform(0, 1, (3, 3)), a, np.full(3, 1 / 3))
        assert np.all(plan.matrix[1] == 0)
        assert plan.converged

    def test_small_epsilon_stays_finite(self):
        C = np.random.default_rng(9).uniform(0, 2, (16, 16))
        plan = sinkhorn(C, eps_reg=1e-3, max_iters=20000)
        assert np.all(np.isfinite(plan.matrix))
        assert plan.violation < 1e-6

    def test_non_convergence_warns(self, caplog):
        C = np.random.default_rng(10).uniform(0, 2, (8, 8))
        with caplog.at_level(logging.WARNING, logger="glocal.transport"):
            plan = sinkhorn(C, max_iters=1, tol=1e-12)
        assert not plan.converged and plan.warning
        assert plan.iterations == 1
        assert any("sinkhorn" in r.message for r in caplog.records)

    def test_unbalanced_mass_shrinks_with_mismatch(self):
        C = np.random.default_rng(11).uniform(0, 1, (5, 5))
        a = np.full(5, 0.2)
        b = np.full(5, 0.4)
        plan = sinkhorn(C, a, b, mode="unbalanced", tau=1.0, max_iters=5000)
        total = plan.matrix.sum()
        assert 1.0 < total < 2.0
        assert np.all(plan.matrix >= 0)
        assert not plan.warning

    def test_unbalanced_tends_to_balanced(self):
        C = np.random.default_rng(12).uniform(0, 1, (5, 5))
        bal = sinkhorn(C, max_iters=5000)
        unb = sinkhorn(C, mode="unbalanced", tau=1e6, max_iters=20000, tol=1e-10)
        np.testing.assert_allclose(unb.matrix, bal.matrix, atol=1e-5)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sinkhorn(np.ones((2, 2)), eps_reg=0)
        with pytest.raises(ValueError):
            sinkhorn(np.ones((2, 2)), [-1.0, 2.0])
        with pytest.raises(ValueError):
            sinkhorn(np.ones((2, 2)), mode="partial")
        with pytest.raises(ShapeError):
            sinkhorn(np.ones((2, 2)), [1.0])

    def test_transposed(self):
        plan = sinkhorn(np.random.default_rng(13).uniform(0, 1, (3, 3)))
        t = plan.transposed()
        np.testing.assert_array_equal(t.matrix, plan.matrix.T)
        np.testing.assert_array_equal(t.alpha, plan.beta)


def make_field(rng, H=2, W=3, C=2, k=3):
    return ModulationField(rng.normal(size=(H, W, C, k * k)), rng.normal(size=(H, W, C)), k)


class TestWarpModulation:
    def test_identity(self):
        field = make_field(np.random.default_rng(0))
        out = warp_modulation(np.eye(6), field)
        np.testing.assert_array_equal(out.taps, field.taps)
        np.testing.assert_array_equal(out.bias, field.bias)

    def test_permutation(self):
        rng = np.random.default_rng(1)
        field = make_field(rng)
        perm = rng.permutation(6)
        P = np.eye(6)[perm] / 6.0
        out = warp_modulation(P, field)
        flat_t = field.taps.reshape(6, -1)
        flat_b = field.bias.reshape(6, -1)
        np.testing.assert_allclose(out.taps.reshape(6, -1), flat_t[perm], atol=1e-6)
        np.testing.assert_allclose(out.bias.reshape(6, -1), flat_b[perm], atol=1e-6)

    def test_dense_oracle(self):
        rng = np.random.default_rng(2)
        field = make_field(rng)
        P = rng.uniform(0, 1, (6, 6))
        out = warp_modulation(P, field)
        Pn = P / P.sum(axis=1, keepdims=True)
        ref = np.zeros((6, field.taps[0, 0].size))
        flat = field.taps.reshape(6, -1).astype(np.float64)
        for i in range(6):
            for j in range(6):
                ref[i] += Pn[i, j] * flat[j]
        np.testing.assert_allclose(out.taps.reshape(6, -1), ref, atol=1e-5)

    def test_raw_plan(self):
        rng = np.random.default_rng(3)
        field = make_field(rng)
        P = rng.uniform(0, 1, (6, 6))
        out = warp_modulation(P, field, normalize_rows=False)
        np.testing.assert_allclose(out.bias.reshape(6, -1), P @ field.bias.reshape(6, -1), atol=1e-5)

    def test_constant_field_preserved(self):
        rng = np.random.default_rng(4)
        field = ModulationField(np.full((2, 3, 2, 9), 0.4), np.full((2, 3, 2), -1.5), 3)
        out = warp_modulation(rng.uniform(0, 1, (6, 6)), field)
        np.testing.assert_allclose(out.taps, 0.4, atol=1e-6)
        np.testing.assert_allclose(out.bias, -1.5, atol=1e-6)

    def test_zero_rows_stay_zero(self):
        P = np.eye(6)
        P[2] = 0
        np.testing.assert_array_equal(row_normalize(P)[2], 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            warp_modulation(np.eye(5), make_field(np.random.default_rng(5)))
