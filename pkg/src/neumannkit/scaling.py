"""Equilibration and symmetric reordering of sparse matrices.

Permutation convention: ``Permutation.order[k]`` is the old index placed at
new position ``k`` (the ``A(p, p)`` convention), and ``forward`` is its
inverse, so the permuted matrix satisfies ``B[forward[i], forward[j]] =
A[i, j]``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import DimensionError, ZeroPivotError
from .sparse import as_csr, diagonal, pattern, strict_upper

__all__ = ["Permutation", "ScalingPair", "rcm_order", "permute_symmetric",
           "bandwidth", "ruiz_scale", "row_scale_to_unit_diag", "near_dd_delta",
           "read_permutation", "write_permutation"]


@dataclass(frozen=True)
class Permutation:
    """A bijection on ``[0, n)``; ``forward[i]`` is the new index of ``i``."""

    forward: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.int64).reshape(-1)
        n = fwd.size
        if n and not np.array_equal(np.sort(fwd), np.arange(n)):
            raise ValueError("permutation is not a bijection on [0, n)")
        object.__setattr__(self, "forward", fwd)

    @classmethod
    def from_order(cls, order):
        order = np.asarray(order, dtype=np.int64).reshape(-1)
        fwd = np.empty_like(order)
        fwd[order] = np.arange(order.size)
        return cls(fwd)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    @property
    def order(self):
        out = np.empty_like(self.forward)
        out[self.forward] = np.arange(self.forward.size)
        return out

    def __len__(self):
        return self.forward.size

    def apply(self, x):
        """Move vector entries to their new positions: ``y[forward[i]] = x[i]``."""
        x = np.asarray(x)
        y = np.empty_like(x)
        y[self.forward] = x
        return y

    def unapply(self, y):
        return np.asarray(y)[self.forward]


@dataclass(frozen=True)
class ScalingPair:
    """Row and column scalings with ``U_scaled = diag(d_row) U diag(d_col)``."""

    d_row: np.ndarray
    d_col: np.ndarray
    iterations_used: int = 0

    def __post_init__(self):
        for name in ("d_row", "d_col"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise ValueError(f"{name} must be strictly positive and finite")
            object.__setattr__(self, name, v)


def bandwidth(A):
    """Half-bandwidth ``max |i - j|`` over stored entries."""
    C = as_csr(A).tocoo()
    if C.nnz == 0:
        return 0
    return int(np.max(np.abs(C.row - C.col)))


def rcm_order(A):
    """Reverse Cuthill-McKee on the symmetrized pattern of ``A + A^T``.

    Disconnected components are ordered one after another.
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"rcm_order: matrix is {A.shape}")
    if A.shape[0] <= 1:
        return Permutation.identity(A.shape[0])
    G = pattern(A)
    G = as_csr(G + G.T)
    order = reverse_cuthill_mckee(G, symmetric_mode=True)
    return Permutation.from_order(order)


def permute_symmetric(A, p):
    """``B[p.forward[i], p.forward[j]] = A[i, j]``."""
    A = as_csr(A)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(p):
        raise DimensionError(f"permute_symmetric: A {A.shape}, permutation of {len(p)}")
    order = p.order
    return as_csr(A[order][:, order])


def read_permutation(path):
    """Plain text, one 0-based index per line, in ``order`` convention."""
    with open(path) as fh:
        vals = [int(ln) for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    return Permutation.from_order(vals)


def write_permutation(p, path):
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(i)) for i in p.order))
        fh.write("\n")


def _require_diagonal(U):
    d = diagonal(U)
    missing = np.flatnonzero(d == 0.0)
    if missing.size:
        raise ZeroPivotError(f"zero or missing diagonal entry in row {missing[0]}",
                             row=int(missing[0]))
    return d


def _abs_row_max(M):
    absM = abs(M)
    return np.asarray(absM.max(axis=1).toarray()).ravel()


def _abs_col_max(M):
    absM = abs(M)
    return np.asarray(absM.max(axis=0).toarray()).ravel()


def ruiz_scale(U, max_iters=5, dep_tol=None, tol=0.0):
    """Sup-norm Ruiz equilibration of a square matrix with nonzero diagonal.

    Each pass divides every row and column by the square root of its largest
    magnitude.  Iteration stops after ``max_iters`` passes, when all row and
    column maxima are within ``tol`` of one, or (when ``dep_tol`` is given)
    once the departure from normality of the scaled triangular matrix drops
    below ``dep_tol``.  A final row pass then sets every diagonal entry to
    ``sign(u_ii)`` exactly; the scalings stay positive.  For triangular input
    a last diagonal similarity keeps every off-diagonal magnitude at most one.

    Returns
    -------
    U_scaled : csr_matrix
    scaling : ScalingPair
    """
    U = as_csr(U)
    n = U.shape[0]
    if U.shape[0] != U.shape[1]:
        raise DimensionError(f"ruiz_scale: matrix is {U.shape}")
    _require_diagonal(U)
    d_row = np.ones(n)
    d_col = np.ones(n)
    M = U.copy()
    used = 0
    for _ in range(max_iters):
        r = _abs_row_max(M)
        c = _abs_col_max(M)
        if tol > 0 and np.all(np.abs(r - 1) <= tol) and np.all(np.abs(c - 1) <= tol):
            break
        sr = 1.0 / np.sqrt(r)
        sc = 1.0 / np.sqrt(c)
        d_row *= sr
        d_col *= sc
        M = as_csr(sp.diags(sr) @ M @ sp.diags(sc))
        used += 1
        if dep_tol is not None and _triangular_dep(M) < dep_tol:
            break
    # exact unit diagonal: fold the remaining diagonal into the row scaling
    diag = diagonal(M)
    d_row = d_row / np.abs(diag)
    M = as_csr(sp.diags(d_row) @ U @ sp.diags(d_col))
    # the fold can push off-diagonals above one; a diagonal similarity
    # brings them back without touching the diagonal
    s = _similarity_clip(M)
    if s is not None:
        d_row = d_row * s
        d_col = d_col / s
        M = as_csr(sp.diags(d_row) @ U @ sp.diags(d_col))
    M.setdiag(np.sign(diagonal(U)))
    return M, ScalingPair(d_row, d_col, used)


def _similarity_clip(M):
    """Weights ``s`` with ``|m_ij| s_i / s_j <= 1`` off the diagonal.

    For a triangular ``M`` the constraints ``log s_i - log s_j <= -log |m_ij|``
    form an acyclic system, solved exactly by one pass in dependency order
    with ``s_i <= 1``.  Returns ``None`` when nothing exceeds one or ``M`` is
    not triangular.
    """
    off = as_csr(M - sp.diags(diagonal(M)))
    off.eliminate_zeros()
    if off.nnz == 0 or np.max(np.abs(off.data)) <= 1.0:
        return None
    C = off.tocoo()
    if np.all(C.col > C.row):
        rows = range(M.shape[0] - 1, -1, -1)
    elif np.all(C.col < C.row):
        rows = range(M.shape[0])
    else:
        return None
    ptr, idx, logs = off.indptr, off.indices, np.log(np.abs(off.data))
    x = np.zeros(M.shape[0])
    for i in rows:
        lo, hi = ptr[i], ptr[i + 1]
        if hi > lo:
            x[i] = min(0.0, float(np.min(x[idx[lo:hi]] - logs[lo:hi])))
    return np.exp(x)


def _triangular_dep(M):
    # departure of a triangular matrix is the norm of its off-diagonal part
    off = M - sp.diags(diagonal(M))
    off = as_csr(off)
    return float(np.sqrt(np.sum(off.data ** 2)))


def row_scale_to_unit_diag(U):
    """Factor ``U = D (I + U_s)`` for upper triangular ``U``.

    Returns ``(d, U_s)`` with ``U_s`` strictly upper triangular.
    """
    U = as_csr(U)
    if U.shape[0] != U.shape[1]:
        raise DimensionError(f"row_scale_to_unit_diag: matrix is {U.shape}")
    if sp.tril(U, k=-1).nnz and np.any(sp.tril(U, k=-1).data != 0):
        raise ValueError("row_scale_to_unit_diag: matrix is not upper triangular")
    d = _require_diagonal(U)
    Us = as_csr(sp.diags(1.0 / d) @ strict_upper(U))
    return d, Us


def near_dd_delta(U):
    """``max_i max(0, sum_{j != i} |u_ij| - |u_ii|)``."""
    U = as_csr(U)
    if U.shape[0] != U.shape[1]:
        raise DimensionError(f"near_dd_delta: matrix is {U.shape}")
    if U.shape[0] == 0:
        return 0.0
    off = as_csr(abs(U - sp.diags(diagonal(U))))
    offsum = np.asarray(off.sum(axis=1)).ravel()
    excess = offsum - np.abs(diagonal(U))
    return float(max(0.0, excess.max()))
