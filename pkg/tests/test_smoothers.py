import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_dd
from neumannkit.errors import DivergenceError, ZeroPivotError
from neumannkit.factor import ilu0, ilut
from neumannkit.problems import poisson1d, poisson2d
from neumannkit.smoothers import (SMOOTHER_KINDS, Smoother, SmootherConfig, contiguous_partition,
                                  gs_sweep, hybrid_gs_sweep, ilu_smooth, jacobi_sweep,
                                  l1_diagonal, l1_jacobi_sweep, partition_labels, poly_gs_sweep)
from neumannkit.sparse import as_csr


def spd(rng, n):
    M = rng.standard_normal((n, n))
    return as_csr(M @ M.T + n * np.eye(n))


class TestJacobi:
    def test_diagonal_exact(self):
        A = as_csr(np.diag([2.0, 4.0, 8.0]))
        b = np.array([2.0, 2.0, 2.0])
        np.testing.assert_array_equal(jacobi_sweep(A, np.zeros(3), b), [1.0, 0.5, 0.25])

    def test_two_by_two(self):
        A = as_csr(np.array([[4.0, 1.0], [2.0, 5.0]]))
        b = np.array([1.0, 2.0])
        np.testing.assert_allclose(jacobi_sweep(A, np.zeros(2), b), [0.25, 0.4], rtol=1e-15)
        np.testing.assert_allclose(jacobi_sweep(A, np.zeros(2), b, omega=0.5), [0.125, 0.2])
        x1 = jacobi_sweep(A, np.array([0.25, 0.4]), b)
        np.testing.assert_allclose(x1, [0.15, 0.3], rtol=1e-14)

    def test_fixed_point(self, rng):
        A = spd(rng, 6)
        x = rng.standard_normal(6)
        np.testing.assert_allclose(jacobi_sweep(A, x, A @ x), x, rtol=1e-14)

    def test_zero_diagonal(self):
        with pytest.raises(ZeroPivotError):
            jacobi_sweep(as_csr(np.array([[0.0, 1.0], [1.0, 1.0]])), np.zeros(2), np.ones(2))


class TestL1Jacobi:
    def test_row_weights(self):
        A = as_csr(np.array([[2.0, -1.0, -1.0], [-1.0, 2.0, 0.0], [-1.0, 0.0, 2.0]]))
        np.testing.assert_array_equal(l1_diagonal(A), [4.0, 3.0, 3.0])

    def test_diagonal_matrix(self):
        A = as_csr(np.diag([2.0, 4.0]))
        np.testing.assert_array_equal(l1_jacobi_sweep(A, np.zeros(2), np.ones(2)), [0.5, 0.25])

    def test_zero_row(self):
        A = as_csr(sp.csr_matrix((2, 2)))
        with pytest.raises(ZeroPivotError):
            l1_jacobi_sweep(A, np.zeros(2), np.ones(2))


class TestGaussSeidel:
    def test_lower_triangular_exact(self, rng):
        M = np.tril(rng.standard_normal((5, 5))) + 5 * np.eye(5)
        b = rng.standard_normal(5)
        np.testing.assert_allclose(gs_sweep(as_csr(M), np.zeros(5), b),
                                   np.linalg.solve(M, b), rtol=1e-13)

    def test_three_by_three_hand(self):
        A = as_csr(np.array([[4.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 4.0]]))
        x = gs_sweep(A, np.zeros(3), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(x, [0.25, 0.5625, 0.890625], rtol=1e-15)
        xb = gs_sweep(A, np.zeros(3), np.array([1.0, 2.0, 3.0]), "backward")
        np.testing.assert_allclose(xb, [0.421875, 0.6875, 0.75], rtol=1e-15)

    def test_diagonal_same_as_jacobi(self, rng):
        A = as_csr(np.diag(rng.uniform(1, 2, 4)))
        x, b = rng.standard_normal(4), rng.standard_normal(4)
        np.testing.assert_allclose(gs_sweep(A, x, b), jacobi_sweep(A, x, b), rtol=1e-14)

    def test_symmetric_is_forward_then_backward(self, rng):
        A = spd(rng, 7)
        x, b = rng.standard_normal(7), rng.standard_normal(7)
        np.testing.assert_allclose(gs_sweep(A, x, b, "symmetric"),
                                   gs_sweep(A, gs_sweep(A, x, b, "forward"), b, "backward"))

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            gs_sweep(poisson1d(3), np.zeros(3), np.ones(3), "sideways")


class TestHybrid:
    def test_single_block_is_gs(self, rng):
        A = spd(rng, 8)
        x, b = rng.standard_normal(8), rng.standard_normal(8)
        np.testing.assert_allclose(hybrid_gs_sweep(A, x, b, [np.arange(8)]), gs_sweep(A, x, b),
                                   rtol=1e-15, atol=1e-15)

    def test_singletons_are_jacobi(self, rng):
        A = spd(rng, 8)
        x, b = rng.standard_normal(8), rng.standard_normal(8)
        parts = [[i] for i in range(8)]
        np.testing.assert_allclose(hybrid_gs_sweep(A, x, b, parts), jacobi_sweep(A, x, b),
                                   rtol=1e-15, atol=1e-15)

    def test_two_blocks_dense_oracle(self, rng):
        A = spd(rng, 6)
        D = A.toarray()
        x, b = rng.standard_normal(6), rng.standard_normal(6)
        blocks = [[0, 1, 2], [3, 4, 5]]
        M = np.zeros((6, 6))
        for blk in blocks:
            M[np.ix_(blk, blk)] = np.tril(D[np.ix_(blk, blk)])
        expect = x + np.linalg.solve(M, b - D @ x)
        np.testing.assert_allclose(hybrid_gs_sweep(A, x, b, blocks), expect, rtol=1e-13)

    def test_partition_validation(self):
        with pytest.raises(ValueError):
            partition_labels([[0, 1], [1, 2]], 3)
        with pytest.raises(ValueError):
            partition_labels([[0, 1]], 3)
        with pytest.raises(ValueError):
            partition_labels([[0, 5]], 3)

    def test_contiguous_partition(self):
        labels = contiguous_partition(10, 3)
        assert labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]


class TestPolyGs:
    def test_degree_zero_is_jacobi(self, rng):
        A = spd(rng, 9)
        x, b = rng.standard_normal(9), rng.standard_normal(9)
        np.testing.assert_allclose(poly_gs_sweep(A, x, b, 0), jacobi_sweep(A, x, b),
                                   rtol=1e-15, atol=1e-15)

    def test_bidiagonal_full_degree_is_gs(self, rng):
        n = 12
        A = as_csr(sp.diags([rng.uniform(-1, 1, n - 1), rng.uniform(1, 2, n)], [-1, 0]))
        x, b = rng.standard_normal(n), rng.standard_normal(n)
        np.testing.assert_allclose(poly_gs_sweep(A, x, b, n - 1), gs_sweep(A, x, b),
                                   rtol=1e-13, atol=1e-13)

    def test_neumann_sum_oracle(self, rng):
        A = spd(rng, 5)
        D = A.toarray()
        x, b = rng.standard_normal(5), rng.standard_normal(5)
        Dinv = np.diag(1.0 / np.diag(D))
        G = -Dinv @ np.tril(D, -1)
        r = b - D @ x
        expect = x + sum(np.linalg.matrix_power(G, j) for j in range(3)) @ Dinv @ r
        np.testing.assert_allclose(poly_gs_sweep(A, x, b, 2), expect, rtol=1e-13)


@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_poly_gs_limits_property(n, seed):
    rng = np.random.default_rng(seed)
    A = as_csr(random_dd(rng, n, 0.2))
    x, b = rng.standard_normal(n), rng.standard_normal(n)
    np.testing.assert_allclose(poly_gs_sweep(A, x, b, 0), jacobi_sweep(A, x, b),
                               rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(poly_gs_sweep(A, x, b, n), gs_sweep(A, x, b),
                               rtol=1e-12, atol=1e-12)


class TestIluSmooth:
    def test_identity_exact(self):
        A = as_csr(sp.identity(5))
        b = np.arange(5.0)
        for kind in ("ilu_direct", "ilu_jacobi"):
            cfg = SmootherConfig(kind=kind, m_L=1, m_U=1)
            np.testing.assert_array_equal(ilu_smooth(A, ilu0(A), np.zeros(5), b, cfg), b)

    @pytest.mark.parametrize("scaling", ["ldu", "ruiz", "none"])
    def test_enough_sweeps_match_direct(self, rng, scaling):
        A = as_csr(random_dd(rng, 30, 0.15))
        F = ilut(A, droptol=1e-3, lfil=8)
        x, b = rng.standard_normal(30), rng.standard_normal(30)
        direct = ilu_smooth(A, F, x, b, SmootherConfig(kind="ilu_direct"))
        jac = ilu_smooth(A, F, x, b, SmootherConfig(kind="ilu_jacobi", m_L=30, m_U=30,
                                                    scaling=scaling))
        np.testing.assert_allclose(jac, direct, rtol=1e-12, atol=1e-12)

    def test_three_sweeps_against_dense_replay(self):
        # dense Jacobi replay on the ILU(0) factors of the 16x16 grid, b = 1, x0 = 0
        A = poisson2d(16)
        F = ilu0(A)
        b = np.ones(256)
        direct = ilu_smooth(A, F, np.zeros(256), b, SmootherConfig(kind="ilu_direct"))
        jac = ilu_smooth(A, F, np.zeros(256), b, SmootherConfig(kind="ilu_jacobi", m_L=3, m_U=3))
        ratio = np.linalg.norm(b - A @ jac) / np.linalg.norm(b - A @ direct)
        assert ratio == pytest.approx(1.0535929630219862, rel=1e-10)

    def test_monotone_in_sweeps(self, rng):
        A = poisson2d(16)
        F = ilu0(A)
        b = rng.standard_normal(256)
        direct = ilu_smooth(A, F, np.zeros(256), b, SmootherConfig(kind="ilu_direct"))
        errs = []
        for m in range(1, 12):
            cfg = SmootherConfig(kind="ilu_jacobi", m_L=m, m_U=m)
            errs.append(np.linalg.norm(ilu_smooth(A, F, np.zeros(256), b, cfg) - direct))
        assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
        assert errs[-1] < 1e-2 * errs[0]

    def test_divergence_names_factor(self):
        # upper factor with huge couplings overflows in the Jacobi sweeps
        n = 6
        A = as_csr(sp.diags([np.ones(n), np.full(n - 1, 1e200)], [0, 1]))
        cfg = SmootherConfig(kind="ilu_jacobi", m_L=2, m_U=6, scaling="none")
        with pytest.raises(DivergenceError) as info:
            ilu_smooth(A, ilu0(A), np.zeros(n), np.ones(n), cfg)
        assert info.value.source == "U factor"
        assert info.value.sweep is not None

    def test_requires_ilu_kind(self):
        A = poisson1d(4)
        with pytest.raises(ValueError):
            ilu_smooth(A, ilu0(A), np.zeros(4), np.ones(4), SmootherConfig(kind="jacobi"))


class TestSmootherObject:
    @pytest.mark.parametrize("kind", SMOOTHER_KINDS)
    def test_every_kind_reduces_error(self, rng, kind):
        A = poisson2d(12)
        x_true = rng.standard_normal(144)
        b = A @ x_true
        omega = 2.0 / 3.0 if kind == "jacobi" else 1.0
        S = Smoother(A, SmootherConfig(kind=kind, sweeps=2, omega=omega))
        x = S.presmooth(np.zeros(144), b)
        assert np.linalg.norm(A @ (x - x_true)) < np.linalg.norm(A @ x_true)

    def test_post_reverses_direction(self, rng):
        A = spd(rng, 6)
        x, b = rng.standard_normal(6), rng.standard_normal(6)
        S = Smoother(A, SmootherConfig(kind="gs_forward"))
        np.testing.assert_allclose(S.postsmooth(x, b), gs_sweep(A, x, b, "backward"), rtol=1e-14)
        S = Smoother(A, SmootherConfig(kind="gs_forward", reverse_post=False))
        np.testing.assert_allclose(S.postsmooth(x, b), gs_sweep(A, x, b, "forward"), rtol=1e-14)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SmootherConfig(kind="sor")
        with pytest.raises(ValueError):
            SmootherConfig(sweeps=0)
        with pytest.raises(ValueError):
            SmootherConfig(kind="ilu_jacobi", m_L=0)
