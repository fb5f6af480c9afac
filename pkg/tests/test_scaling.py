import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_triangular
from neumannkit.errors import DimensionError, ZeroPivotError
from neumannkit.problems import poisson1d, poisson2d
from neumannkit.scaling import (Permutation, ScalingPair, bandwidth, near_dd_delta,
                                permute_symmetric, rcm_order, read_permutation,
                                row_scale_to_unit_diag, ruiz_scale, write_permutation)
from neumannkit.sparse import as_csr


class TestPermutation:
    def test_rejects_non_bijection(self):
        with pytest.raises(ValueError):
            Permutation([0, 0, 1])

    def test_order_and_forward_are_inverse(self):
        p = Permutation.from_order([2, 0, 1])
        assert np.array_equal(p.order, [2, 0, 1])
        assert np.array_equal(p.forward, [1, 2, 0])

    def test_apply_unapply(self, rng):
        p = Permutation.from_order(rng.permutation(10))
        x = rng.standard_normal(10)
        assert np.array_equal(p.unapply(p.apply(x)), x)

    def test_file_round_trip(self, tmp_path, rng):
        p = Permutation.from_order(rng.permutation(25))
        path = tmp_path / "perm.txt"
        write_permutation(p, path)
        assert np.array_equal(read_permutation(path).forward, p.forward)


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=30, unique=True))
def test_permutation_round_trip_property(keys):
    order = np.argsort(keys)
    p = Permutation.from_order(order)
    assert np.array_equal(Permutation.from_order(p.order).forward, p.forward)
    x = np.arange(len(keys), dtype=float)
    assert np.array_equal(p.unapply(p.apply(x)), x)


class TestPermuteSymmetric:
    def test_identity(self):
        A = poisson2d(3)
        assert (permute_symmetric(A, Permutation.identity(9)) != A).nnz == 0

    def test_reversal_entrywise(self, rng):
        M = rng.standard_normal((3, 3))
        B = permute_symmetric(as_csr(M), Permutation.from_order([2, 1, 0])).toarray()
        for i in range(3):
            for j in range(3):
                assert B[2 - i, 2 - j] == M[i, j]

    def test_involution_twice(self, rng):
        M = as_csr(rng.standard_normal((4, 4)))
        p = Permutation.from_order([1, 0, 3, 2])
        assert (permute_symmetric(permute_symmetric(M, p), p) != M).nnz == 0

    def test_entry_mapping(self, rng):
        M = as_csr(rng.standard_normal((6, 6)))
        p = Permutation.from_order(rng.permutation(6))
        B = permute_symmetric(M, p)
        f = p.forward
        for i in range(6):
            for j in range(6):
                assert B[f[i], f[j]] == M[i, j]

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            permute_symmetric(poisson1d(3), Permutation.identity(4))


class TestRcm:
    def test_tridiagonal_stays_banded(self):
        A = poisson1d(10)
        assert bandwidth(permute_symmetric(A, rcm_order(A))) == 1

    def test_grid_laplacian_bandwidth(self):
        A = poisson2d(8)
        assert bandwidth(permute_symmetric(A, rcm_order(A))) <= 8

    def test_recovers_band_from_shuffle(self, rng):
        A = poisson2d(8)
        shuffled = permute_symmetric(A, Permutation.from_order(rng.permutation(64)))
        assert bandwidth(shuffled) > 8
        assert bandwidth(permute_symmetric(shuffled, rcm_order(shuffled))) <= 8

    def test_single_point(self):
        assert np.array_equal(rcm_order(as_csr(np.eye(1))).forward, [0])

    def test_disconnected_components(self):
        A = as_csr(sp.block_diag([poisson1d(4), poisson1d(3)]))
        p = rcm_order(A)
        assert sorted(p.forward.tolist()) == list(range(7))
        assert bandwidth(permute_symmetric(A, p)) == 1


class TestRuiz:
    def test_identity_unchanged(self):
        M, pair = ruiz_scale(as_csr(sp.identity(5)))
        assert np.array_equal(M.toarray(), np.eye(5))
        assert np.array_equal(pair.d_row, np.ones(5)) and np.array_equal(pair.d_col, np.ones(5))

    def test_two_by_two(self):
        U = as_csr(np.array([[4.0, 2.0], [0.0, 1.0]]))
        M, pair = ruiz_scale(U)
        assert np.array_equal(M.diagonal(), [1.0, 1.0])
        # dense replay of five sup-norm passes plus the diagonal fold
        assert M[0, 1] == pytest.approx(2.0 ** -0.25, rel=1e-14)
        np.testing.assert_allclose(pair.d_row, [0.5, 2.0 ** 0.25], rtol=1e-14)
        np.testing.assert_allclose(pair.d_col, [0.5, 2.0 ** -0.25], rtol=1e-14)
        np.testing.assert_allclose(
            (sp.diags(pair.d_row) @ U @ sp.diags(pair.d_col)).toarray(), M.toarray(), rtol=1e-15)

    def test_missing_diagonal(self):
        with pytest.raises(ZeroPivotError):
            ruiz_scale(as_csr(np.array([[0.0, 1.0], [0.0, 1.0]])))

    def test_negative_diagonal_keeps_sign(self):
        M, pair = ruiz_scale(as_csr(np.array([[-3.0, 1.0], [0.0, 2.0]])))
        assert np.array_equal(M.diagonal(), [-1.0, 1.0])
        assert np.all(pair.d_row > 0) and np.all(pair.d_col > 0)

    def test_dep_tol_stops_early(self, rng):
        U = as_csr(random_triangular(rng, 30, "upper", 0.3))
        _, full = ruiz_scale(U, max_iters=5)
        _, early = ruiz_scale(U, max_iters=5, dep_tol=1e12)
        assert early.iterations_used == 1 and full.iterations_used == 5

    def test_scaling_pair_validation(self):
        with pytest.raises(ValueError):
            ScalingPair(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


@given(st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_ruiz_invariants(n, seed):
    rng = np.random.default_rng(seed)
    U = as_csr(random_triangular(rng, n, "upper", 0.4))
    M, pair = ruiz_scale(U)
    assert np.array_equal(np.abs(M.diagonal()), np.ones(n))
    off = as_csr(M - sp.diags(M.diagonal()))
    assert off.nnz == 0 or np.max(np.abs(off.data)) <= 1.0 + 1e-12
    np.testing.assert_allclose((sp.diags(pair.d_row) @ U @ sp.diags(pair.d_col)).toarray(),
                               M.toarray(), rtol=1e-12, atol=1e-15)


class TestRowScale:
    def test_scaled_identity(self):
        d, Us = row_scale_to_unit_diag(as_csr(3.0 * sp.identity(4)))
        assert np.array_equal(d, 3.0 * np.ones(4)) and Us.nnz == 0

    def test_reconstruction(self):
        U = as_csr(np.array([[2.0, 4.0, -2.0], [0.0, -1.0, 3.0], [0.0, 0.0, 5.0]]))
        d, Us = row_scale_to_unit_diag(U)
        assert np.array_equal(d, [2.0, -1.0, 5.0])
        assert np.array_equal(Us.toarray(), [[0, 2, -1], [0, 0, -3], [0, 0, 0]])
        np.testing.assert_array_equal((sp.diags(d) @ (sp.identity(3) + Us)).toarray(), U.toarray())

    def test_zero_pivot(self):
        with pytest.raises(ZeroPivotError):
            row_scale_to_unit_diag(as_csr(np.array([[1.0, 1.0], [0.0, 0.0]])))

    def test_rejects_lower_entries(self):
        with pytest.raises(ValueError):
            row_scale_to_unit_diag(as_csr(np.array([[1.0, 0.0], [1.0, 1.0]])))


class TestNearDominance:
    def test_identity(self):
        assert near_dd_delta(as_csr(sp.identity(4))) == 0.0

    def test_hand_case(self):
        assert near_dd_delta(as_csr(np.array([[1.0, 3.0], [0.0, 1.0]]))) == 2.0

    def test_dominant_random(self, rng):
        U = as_csr(random_triangular(rng, 10, "upper", 0.5, dominant=True))
        assert near_dd_delta(U) == 0.0
