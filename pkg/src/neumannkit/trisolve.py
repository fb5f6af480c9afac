"""Direct and Jacobi/Neumann solvers for sparse triangular systems."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .errors import DimensionError, DivergenceError, ZeroPivotError
from .sparse import as_csr, diagonal, two_norm

__all__ = ["TriangularOperator", "direct_solve", "jacobi_solve", "neumann_apply",
           "iteration_matrix", "power_trace", "TracePoint", "nilpotency_index",
           "is_strictly_triangular"]

# entries below this magnitude count as exact zeros in matrix powers
NILPOTENCY_FLOOR = 1e-300


@dataclass(frozen=True)
class TriangularOperator:
    """A sparse triangular matrix with a declared shape.

    With ``unit_diagonal`` the matrix stores only the strict part and the
    diagonal is implicitly one.
    """

    matrix: sp.csr_matrix
    shape: str = "lower"
    unit_diagonal: bool = False

    def __post_init__(self):
        if self.shape not in ("lower", "upper"):
            raise ValueError(f"shape must be 'lower' or 'upper', got {self.shape!r}")
        M = as_csr(self.matrix)
        if M.shape[0] != M.shape[1]:
            raise DimensionError(f"triangular operator must be square, got {M.shape}")
        C = M.tocoo()
        bad = C.col > C.row if self.shape == "lower" else C.col < C.row
        if np.any(bad):
            raise ValueError(f"stored entries outside the {self.shape} triangle")
        if self.unit_diagonal and np.any(C.row == C.col):
            raise ValueError("unit-diagonal operator must not store diagonal entries")
        object.__setattr__(self, "matrix", M)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def diag(self):
        if self.unit_diagonal:
            return np.ones(self.n)
        return diagonal(self.matrix)

    @property
    def strict(self):
        """Off-diagonal part as CSR."""
        if self.unit_diagonal:
            return self.matrix
        k = -1 if self.shape == "lower" else 1
        tri = sp.tril if self.shape == "lower" else sp.triu
        return as_csr(tri(self.matrix, k=k))

    def full(self):
        """The operator as an explicit matrix (identity added when unit)."""
        if self.unit_diagonal:
            return as_csr(self.matrix + sp.identity(self.n, format="csr"))
        return self.matrix

    def matvec(self, x):
        if self.unit_diagonal:
            return x + self.matrix @ x
        return self.matrix @ x

    @classmethod
    def from_matrix(cls, M, shape, unit_diagonal=False):
        """Take the requested triangle of ``M`` (drops the diagonal when unit)."""
        M = as_csr(M)
        if shape == "lower":
            part = sp.tril(M, k=-1 if unit_diagonal else 0)
        else:
            part = sp.triu(M, k=1 if unit_diagonal else 0)
        return cls(as_csr(part), shape, unit_diagonal)


def _check_pivots(T):
    if T.unit_diagonal:
        return T.diag
    d = T.diag
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ZeroPivotError(f"zero pivot in row {zero[0]}", row=int(zero[0]))
    return d


def _check_rhs(T, b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (T.n,):
        raise DimensionError(f"right-hand side has shape {b.shape}, operator is {T.n}x{T.n}")
    return b


def direct_solve(T, b):
    """Forward or backward substitution."""
    b = _check_rhs(T, b)
    _check_pivots(T)
    if T.n == 0:
        return b.copy()
    lower = T.shape == "lower"
    return spsolve_triangular(T.matrix, b, lower=lower,
                              unit_diagonal=T.unit_diagonal)


def jacobi_solve(T, b, sweeps, x0=None, source=None):
    """Jacobi iteration ``x <- x + D^{-1}(b - T x)`` for a triangular ``T``.

    Starts from zero unless ``x0`` is given.  A non-finite iterate raises
    :class:`DivergenceError` with the sweep index and the growth of the
    largest magnitude relative to ``b``.
    """
    b = _check_rhs(T, b)
    d = _check_pivots(T)
    x = np.zeros(T.n) if x0 is None else np.array(x0, dtype=np.float64)
    scale = np.max(np.abs(b)) if b.size else 0.0
    for k in range(1, sweeps + 1):
        x = x + (b - T.matvec(x)) / d
        if not np.all(np.isfinite(x)):
            finite = np.abs(x[np.isfinite(x)])
            growth = float(finite.max() / scale) if finite.size and scale > 0 else np.inf
            raise DivergenceError(
                f"Jacobi triangular solve diverged at sweep {k}"
                + (f" ({source})" if source else ""),
                sweep=k, growth=growth, source=source)
    return x


def is_strictly_triangular(M):
    C = as_csr(M).tocoo()
    nz = C.data != 0
    r, c = C.row[nz], C.col[nz]
    return bool(np.all(c > r) or np.all(c < r))


def neumann_apply(Us, f, degree):
    """Truncated Neumann series ``sum_{j=0}^{degree} (-U_s)^j f``.

    Evaluated in nested (Horner) form ``x <- f - U_s x``, so it matches
    ``degree + 1`` Jacobi sweeps on ``I + U_s`` from a zero start.
    """
    Us = as_csr(Us)
    f = np.asarray(f, dtype=np.float64)
    if Us.shape[0] != Us.shape[1] or f.shape != (Us.shape[0],):
        raise DimensionError(f"neumann_apply: U_s {Us.shape}, f {f.shape}")
    if Us.nnz and not is_strictly_triangular(Us):
        raise ValueError("neumann_apply: U_s must be strictly triangular")
    x = f.copy()
    for _ in range(degree):
        x = f - Us @ x
    return x


def iteration_matrix(T):
    """Jacobi iteration matrix ``G = I - D^{-1} T`` (strictly triangular)."""
    d = _check_pivots(T)
    return as_csr(sp.diags(-1.0 / d) @ T.strict)


class TracePoint(NamedTuple):
    p: int
    max_abs_entry: float
    two_norm: float
    nnz: int


def power_trace(G, p_max=None):
    """Max entry, 2-norm and nnz of ``G^p`` for ``p = 1, 2, ...``.

    Stops at the first power with no nonzero entries (the numerical
    nilpotency index) or at ``p_max`` (default ``n``).
    """
    G = as_csr(G, copy=True)
    n = G.shape[0]
    p_max = n if p_max is None else p_max
    G.data[np.abs(G.data) < NILPOTENCY_FLOOR] = 0.0
    G.eliminate_zeros()
    trace = []
    P = G
    for p in range(1, max(p_max, 1) + 1):
        if P.nnz == 0:
            trace.append(TracePoint(p, 0.0, 0.0, 0))
            break
        trace.append(TracePoint(p, float(np.max(np.abs(P.data))), two_norm(P), int(P.nnz)))
        if p == p_max:
            break
        P = as_csr(P @ G)
        P.data[np.abs(P.data) < NILPOTENCY_FLOOR] = 0.0
        P.eliminate_zeros()
    return trace


def nilpotency_index(G):
    """Smallest ``p`` with ``G^p = 0`` (structural zeros only)."""
    trace = power_trace(G)
    last = trace[-1]
    if last.nnz != 0:
        raise ValueError("matrix is not nilpotent within n powers")
    return last.p
