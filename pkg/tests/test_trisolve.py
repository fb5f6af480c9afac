import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_triangular
from neumannkit.errors import DimensionError, DivergenceError, ZeroPivotError
from neumannkit.sparse import as_csr
from neumannkit.trisolve import (TriangularOperator, direct_solve, is_strictly_triangular,
                                 iteration_matrix, jacobi_solve, neumann_apply,
                                 nilpotency_index, power_trace)

EPS = np.finfo(float).eps


def bidiagonal(n, value=1.0, shape="lower"):
    k = -1 if shape == "lower" else 1
    return as_csr(sp.diags([np.full(n - 1, value)], [k], shape=(n, n)))


class TestOperator:
    def test_rejects_wrong_triangle(self):
        with pytest.raises(ValueError):
            TriangularOperator(as_csr(np.array([[1.0, 1.0], [0.0, 1.0]])), "lower")

    def test_unit_must_not_store_diagonal(self):
        with pytest.raises(ValueError):
            TriangularOperator(as_csr(np.eye(2)), "lower", unit_diagonal=True)

    def test_unit_full_and_matvec(self):
        T = TriangularOperator(bidiagonal(3, 2.0), "lower", unit_diagonal=True)
        full = T.full().toarray()
        assert np.array_equal(full, np.eye(3) + np.diag([2.0, 2.0], -1))
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(T.matvec(x), full @ x)

    def test_from_matrix(self, rng):
        M = rng.standard_normal((4, 4))
        T = TriangularOperator.from_matrix(as_csr(M), "upper")
        assert np.array_equal(T.full().toarray(), np.triu(M))


class TestDirectSolve:
    def test_identity(self):
        b = np.array([3.0, -1.0, 2.0])
        assert np.array_equal(direct_solve(TriangularOperator(as_csr(np.eye(3))), b), b)

    def test_zero_pivot(self):
        T = TriangularOperator(as_csr(np.array([[1.0, 0.0], [1.0, 0.0]])), "lower")
        with pytest.raises(ZeroPivotError) as info:
            direct_solve(T, np.ones(2))
        assert info.value.row == 1

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            direct_solve(TriangularOperator(as_csr(np.eye(3))), np.ones(2))

    @pytest.mark.parametrize("shape", ["lower", "upper"])
    def test_random_against_dense(self, rng, shape):
        for _ in range(110):
            n = int(rng.integers(1, 40))
            M = random_triangular(rng, n, shape, rng.uniform(0.05, 0.5), dominant=True)
            T = TriangularOperator(as_csr(M), shape)
            b = rng.standard_normal(n)
            x = direct_solve(T, b)
            np.testing.assert_allclose(x, np.linalg.solve(M.toarray(), b), rtol=1e-11, atol=1e-12)
            res = np.linalg.norm(b - M @ x)
            assert res <= n * EPS * np.linalg.norm(M.toarray(), "fro") * np.linalg.norm(x) + 1e-300

    def test_unit_diagonal(self, rng):
        S = as_csr(random_triangular(rng, 20, "upper", 0.3, unit=True))
        T = TriangularOperator(S, "upper", unit_diagonal=True)
        b = rng.standard_normal(20)
        np.testing.assert_allclose(direct_solve(T, b),
                                   np.linalg.solve(np.eye(20) + S.toarray(), b), rtol=1e-10)


class TestJacobiSolve:
    def test_identity_one_sweep(self):
        b = np.array([1.0, 2.0])
        assert np.array_equal(jacobi_solve(TriangularOperator(as_csr(np.eye(2))), b, 1), b)

    def test_bidiagonal_nilpotent(self):
        T = TriangularOperator(bidiagonal(4, -0.7), "lower", unit_diagonal=True)
        b = np.array([1.0, -2.0, 0.5, 3.0])
        np.testing.assert_allclose(jacobi_solve(T, b, 4), direct_solve(T, b), rtol=1e-14)

    def test_contraction_half(self, rng):
        S = rng.standard_normal((10, 10))
        S = np.triu(S, 1)
        S *= 0.5 / np.linalg.norm(S, 2)
        T = TriangularOperator(as_csr(S), "upper", unit_diagonal=True)
        b = rng.standard_normal(10)
        x = np.linalg.solve(np.eye(10) + S, b)
        err = np.linalg.norm(jacobi_solve(T, b, 5) - x)
        assert err <= 0.5 ** 5 * np.linalg.norm(x) * (1 + 1e-12)

    def test_error_recurrence(self, rng):
        M = random_triangular(rng, 25, "lower", 0.3)
        T = TriangularOperator(as_csr(M), "lower")
        G = iteration_matrix(T).toarray()
        b = rng.standard_normal(25)
        x = np.linalg.solve(M.toarray(), b)
        x0 = rng.standard_normal(25)
        for p in (1, 3, 6):
            e = jacobi_solve(T, b, p, x0=x0) - x
            np.testing.assert_allclose(e, np.linalg.matrix_power(G, p) @ (x0 - x),
                                       rtol=1e-8, atol=1e-10)

    def test_divergence_reports_sweep(self):
        T = TriangularOperator(bidiagonal(4, 1e200, "upper"), "upper", unit_diagonal=True)
        with pytest.raises(DivergenceError) as info:
            jacobi_solve(T, np.ones(4), 10, source="U")
        assert info.value.sweep == 3
        assert info.value.source == "U"

    def test_zero_pivot(self):
        T = TriangularOperator(as_csr(np.array([[0.0, 1.0], [0.0, 1.0]])), "upper")
        with pytest.raises(ZeroPivotError):
            jacobi_solve(T, np.ones(2), 2)


class TestNeumann:
    def test_zero_series(self):
        f = np.array([1.0, 2.0, 3.0])
        for degree in (0, 1, 5):
            assert np.array_equal(neumann_apply(as_csr(sp.csr_matrix((3, 3))), f, degree), f)

    def test_superdiagonal_exact(self):
        Us = bidiagonal(3, 2.0, "upper")
        f = np.array([1.0, 1.0, 1.0])
        np.testing.assert_allclose(neumann_apply(Us, f, 3),
                                   np.linalg.solve(np.eye(3) + Us.toarray(), f), rtol=1e-15)

    def test_truncation_error(self, rng):
        S = np.triu(rng.standard_normal((15, 15)), 1) * 0.3
        f = rng.standard_normal(15)
        approx = neumann_apply(as_csr(S), f, 6)
        exact = np.linalg.solve(np.eye(15) + S, f)
        # the remainder is exactly (-S)^7 (I + S)^{-1} f
        S7 = np.linalg.matrix_power(S, 7)
        np.testing.assert_allclose(exact - approx, -S7 @ exact, atol=1e-12)
        assert np.linalg.norm(approx - exact) <= np.linalg.norm(S7, 2) * np.linalg.norm(exact) + 1e-12

    def test_matches_jacobi_sweeps(self, rng):
        S = as_csr(random_triangular(rng, 30, "upper", 0.2, unit=True))
        f = rng.standard_normal(30)
        T = TriangularOperator(S, "upper", unit_diagonal=True)
        for degree in range(5):
            np.testing.assert_allclose(neumann_apply(S, f, degree),
                                       jacobi_solve(T, f, degree + 1), rtol=1e-13, atol=1e-13)

    def test_rejects_non_strict(self):
        with pytest.raises(ValueError):
            neumann_apply(as_csr(np.eye(3)), np.ones(3), 2)


@given(st.integers(1, 25), st.integers(0, 2**31 - 1), st.sampled_from(["lower", "upper"]))
def test_jacobi_exact_at_nilpotency(n, seed, shape):
    rng = np.random.default_rng(seed)
    M = random_triangular(rng, n, shape, 0.3)
    T = TriangularOperator(as_csr(M), shape)
    p = nilpotency_index(iteration_matrix(T))
    b = rng.standard_normal(n)
    x = direct_solve(T, b)
    np.testing.assert_allclose(jacobi_solve(T, b, p), x, rtol=1e-10,
                               atol=1e-12 * max(1.0, np.abs(x).max()))


class TestIterationMatrix:
    def test_unit_diagonal(self):
        S = bidiagonal(4, 3.0)
        G = iteration_matrix(TriangularOperator(S, "lower", unit_diagonal=True))
        assert np.array_equal(G.toarray(), -S.toarray())

    def test_three_by_three(self):
        U = as_csr(np.array([[2.0, 1.0, -4.0], [0.0, 4.0, 2.0], [0.0, 0.0, 5.0]]))
        G = iteration_matrix(TriangularOperator(U, "upper")).toarray()
        assert np.array_equal(G, [[0.0, -0.5, 2.0], [0.0, 0.0, -0.5], [0.0, 0.0, 0.0]])

    def test_diagonal_gives_empty(self):
        G = iteration_matrix(TriangularOperator(as_csr(np.diag([1.0, 2.0])), "lower"))
        assert G.nnz == 0
        assert is_strictly_triangular(G)


class TestPowerTrace:
    def test_zero(self):
        trace = power_trace(as_csr(sp.csr_matrix((3, 3))))
        assert [tuple(t) for t in trace] == [(1, 0.0, 0.0, 0)]

    def test_superdiagonal_ones(self):
        trace = power_trace(bidiagonal(4, 1.0, "upper"))
        assert [t.nnz for t in trace] == [3, 2, 1, 0]
        assert [t.max_abs_entry for t in trace] == [1.0, 1.0, 1.0, 0.0]
        assert nilpotency_index(bidiagonal(4, 1.0, "upper")) == 4

    def test_single_entry(self):
        G = as_csr(sp.coo_matrix(([5.0], ([0], [3])), shape=(6, 6)))
        assert nilpotency_index(G) == 2

    def test_two_norm_column(self, rng):
        S = as_csr(random_triangular(rng, 12, "lower", 0.4, unit=True))
        for tp in power_trace(S):
            P = np.linalg.matrix_power(S.toarray(), tp.p)
            assert tp.two_norm == pytest.approx(np.linalg.norm(P, 2), rel=1e-10, abs=1e-300)

    def test_p_max_cap(self):
        assert len(power_trace(bidiagonal(10, 1.0), p_max=3)) == 3
