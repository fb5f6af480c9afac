"""CSR storage helpers, kernels and Matrix Market I/O.

Every operator in the package is a ``scipy.sparse.csr_matrix`` in canonical
form: float64 values, sorted column indices within each row and no duplicate
entries.  :func:`as_csr` produces that form and all public functions here
return it.  Row kernels accumulate in ascending column order, so results are
reproducible run to run.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .errors import DimensionError, MatrixMarketError

__all__ = [
    "as_csr", "is_canonical", "spmv", "fused_multidot", "spgemm",
    "galerkin_triple", "split_dlu", "submatrix", "transpose",
    "frobenius_norm", "inf_norm", "extract_rowsum", "strict_lower",
    "strict_upper", "diagonal", "pattern", "two_norm", "mm_read", "mm_write",
]

# dense SVD is used for the 2-norm up to this size
DENSE_NORM_LIMIT = 2000


def as_csr(A, copy=False):
    """Return ``A`` as a canonical float64 CSR matrix.

    Accepts any scipy sparse matrix/array or a dense 2-D array.  Duplicate
    entries are summed and column indices sorted; explicit zeros are kept.
    """
    if sp.issparse(A):
        M = sp.csr_matrix(A, dtype=np.float64, copy=copy)
    else:
        arr = np.asarray(A, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D operator, got ndim={arr.ndim}")
        M = sp.csr_matrix(arr)
    if not M.has_canonical_format:
        M = M.copy() if not copy else M
        M.sum_duplicates()
        M.sort_indices()
    return M


def is_canonical(A):
    """Check the CSR invariants: offsets, strictly increasing columns, range."""
    if not sp.isspmatrix_csr(A):
        return False
    n, m = A.shape
    ptr, idx = A.indptr, A.indices
    if len(ptr) != n + 1 or ptr[0] != 0 or ptr[-1] != len(idx):
        return False
    if np.any(np.diff(ptr) < 0):
        return False
    if len(idx) and (idx.min() < 0 or idx.max() >= m):
        return False
    # within each row the columns must increase strictly
    steps = np.diff(idx)
    row_start = np.zeros(len(idx), dtype=bool)
    row_start[ptr[:-1][ptr[:-1] < len(idx)]] = True
    return bool(np.all((steps > 0) | row_start[1:]))


def spmv(A, x):
    """Sparse matrix-vector product ``y = A x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"spmv: A is {A.shape}, x has shape {x.shape}")
    return A @ x


def fused_multidot(V, u, w):
    """Return ``(V^T u, V^T w)`` from a single pass over ``V``.

    Both vectors are stacked into an ``n x 2`` block so the tall basis is
    traversed once, which is the one-reduction step of the low-sync
    Gram-Schmidt projection.
    """
    V = np.asarray(V, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if V.ndim != 2 or u.shape != (V.shape[0],) or w.shape != (V.shape[0],):
        raise DimensionError(
            f"fused_multidot: V {V.shape}, u {u.shape}, w {w.shape}")
    if V.shape[1] == 0:
        return np.zeros(0), np.zeros(0)
    both = V.T @ np.column_stack((u, w))
    return both[:, 0].copy(), both[:, 1].copy()


def spgemm(A, B, drop_tol=0.0):
    """Sparse product ``A B``.

    Entries with magnitude ``<= drop_tol`` are removed; with the default of
    zero only exact cancellations disappear.
    """
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"spgemm: {A.shape} @ {B.shape}")
    C = as_csr(as_csr(A) @ as_csr(B))
    if drop_tol > 0.0:
        C.data[np.abs(C.data) <= drop_tol] = 0.0
    C.eliminate_zeros()
    return C


def galerkin_triple(P, A):
    """Coarse operator ``P^T A P``.

    The product is formed as ``P^T (A P)``; when ``A`` is symmetric the result
    is symmetrized exactly to remove the last-bit asymmetry of the two
    association orders.
    """
    if A.shape[0] != A.shape[1] or P.shape[0] != A.shape[0]:
        raise DimensionError(f"galerkin_triple: P {P.shape}, A {A.shape}")
    P = as_csr(P)
    A = as_csr(A)
    AP = spgemm(A, P)
    Ac = spgemm(as_csr(P.T), AP)
    if _is_symmetric(A):
        Ac = as_csr(0.5 * (Ac + Ac.T))
        Ac.eliminate_zeros()
    return Ac


def _is_symmetric(A):
    if A.shape[0] != A.shape[1]:
        return False
    diff = A - A.T
    return diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0


def diagonal(A):
    """Diagonal entries (zero where structurally missing)."""
    return np.asarray(A.diagonal(), dtype=np.float64)


def strict_lower(A):
    return as_csr(sp.tril(A, k=-1, format="csr"))


def strict_upper(A):
    return as_csr(sp.triu(A, k=1, format="csr"))


def split_dlu(A):
    """Split square ``A`` into ``(d, L, U)`` with ``A = L + diag(d) + U``.

    ``L`` and ``U`` are the strictly lower and strictly upper parts.
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"split_dlu: matrix is {A.shape}")
    return diagonal(A), strict_lower(A), strict_upper(A)


def submatrix(A, rows, cols):
    """Extract ``A[rows][:, cols]`` for sorted, duplicate-free index sets."""
    A = as_csr(A)
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    cols = np.asarray(cols, dtype=np.int64).reshape(-1)
    for name, idx, lim in (("row", rows, A.shape[0]), ("column", cols, A.shape[1])):
        if idx.size and (idx.min() < 0 or idx.max() >= lim):
            raise IndexError(f"submatrix: {name} index out of range [0, {lim})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError(f"submatrix: {name} indices must be sorted and unique")
    return as_csr(A[rows][:, cols])


def transpose(A):
    return as_csr(A.T)


def frobenius_norm(A):
    return float(np.sqrt(np.sum(np.square(as_csr(A).data))))


def inf_norm(A):
    """Max absolute row sum."""
    A = as_csr(A)
    if A.shape[0] == 0:
        return 0.0
    return float(np.asarray(abs(A).sum(axis=1)).max())


def extract_rowsum(A):
    """Row sums ``A 1``."""
    return np.asarray(as_csr(A) @ np.ones(A.shape[1]), dtype=np.float64)


def pattern(A):
    """Unit-valued copy of the stored pattern (explicit zeros removed)."""
    A = as_csr(A, copy=True)
    A.eliminate_zeros()
    A.data[:] = 1.0
    return A


def two_norm(A, tol=1e-10, maxiter=10000, seed=0):
    """Spectral norm.

    Dense SVD for operators with both sides up to ``DENSE_NORM_LIMIT``;
    otherwise ARPACK Lanczos on ``A^T A`` with relative tolerance ``tol`` and a
    seeded start vector.
    """
    if sp.issparse(A):
        A = as_csr(A)
        if A.nnz == 0:
            return 0.0
    elif np.asarray(A).size == 0:
        return 0.0
    if max(A.shape) <= DENSE_NORM_LIMIT or min(A.shape) < 3:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
        return float(np.linalg.norm(dense, 2))
    v0 = np.random.default_rng(seed).standard_normal(min(A.shape))
    s = svds(A, k=1, tol=tol, maxiter=maxiter, v0=v0, return_singular_vectors=False)
    return float(s[0])


# --------------------------------------------------------------------------
# Matrix Market

_BANNER = "%%matrixmarket"


def mm_read(path):
    """Read a real coordinate Matrix Market file into canonical CSR.

    ``symmetric`` files are expanded (diagonal stored once); duplicate
    entries are summed.  Indices in the file are 1-based.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lower().startswith(_BANNER):
        raise MatrixMarketError(f"{path}: missing %%MatrixMarket banner")
    header = lines[0].split()
    if len(header) != 5:
        raise MatrixMarketError(f"{path}: malformed banner {lines[0]!r}")
    _, obj, fmt, field, symmetry = (h.lower() for h in header)
    if obj != "matrix":
        raise MatrixMarketError(f"{path}: unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"{path}: non-real field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError(f"{path}: missing size line")
    try:
        nrows, ncols, nnz = (int(t) for t in body[0].split())
    except ValueError:
        raise MatrixMarketError(f"{path}: malformed size line {body[0]!r}") from None
    entries = body[1:]
    if len(entries) != nnz:
        raise MatrixMarketError(f"{path}: expected {nnz} entries, found {len(entries)}")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    for k, ln in enumerate(entries):
        parts = ln.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"{path}: malformed entry {ln!r}")
        try:
            rows[k], cols[k], vals[k] = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"{path}: malformed entry {ln!r}") from None
    if nnz and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise MatrixMarketError(f"{path}: entry index out of bounds")

    if symmetry == "symmetric":
        if nrows != ncols:
            raise MatrixMarketError(f"{path}: symmetric matrix must be square")
        off = rows != cols
        rows, cols, vals = (np.concatenate((rows, cols[off])),
                            np.concatenate((cols, rows[off])),
                            np.concatenate((vals, vals[off])))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return as_csr(A)


def mm_write(A, path, symmetric=False, comment=None):
    """Write ``A`` in coordinate real format.

    Values use the shortest round-trip representation, so reading the file
    back gives bit-identical entries.  With ``symmetric=True`` only the lower
    triangle is written (the caller asserts symmetry).
    """
    A = as_csr(A)
    C = A.tocoo()
    rows, cols, vals = C.row, C.col, C.data
    if symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    sym = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {sym}\n")
        if comment:
            for ln in str(comment).splitlines():
                fh.write(f"% {ln}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")
