"""Incomplete LU factorizations: ILU(0), dual-threshold ILUT, LDU form.

No pivoting is done in either factorization; a zero pivot raises
:class:`~neumannkit.errors.ZeroPivotError` carrying the row index.
"""

import heapq
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ZeroPivotError
from .scaling import row_scale_to_unit_diag
from .sparse import as_csr, diagonal
from .trisolve import TriangularOperator

__all__ = ["IluFactorization", "ilu0", "ilut", "to_ldu"]


@dataclass(frozen=True)
class IluFactorization:
    """``A ~ L U`` with unit-lower ``L``; in LDU form also ``U = D (I + U_s)``."""

    L: TriangularOperator
    U: TriangularOperator
    d: Optional[np.ndarray] = None
    Us: Optional[sp.csr_matrix] = None
    droptol: float = 0.0
    lfil: Optional[int] = None
    form: str = "LU"

    @property
    def n(self):
        return self.L.n

    def product(self):
        """Explicit ``L U`` (for checks; fill may be large)."""
        return as_csr(self.L.full() @ self.U.full())


def _rows_to_csr(n, cols, vals):
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(c) for c in cols])
    idx = np.concatenate(cols) if n and ptr[-1] else np.zeros(0, dtype=np.int64)
    dat = np.concatenate(vals) if n and ptr[-1] else np.zeros(0)
    return as_csr(sp.csr_matrix((dat, idx, ptr), shape=(n, n)))


def _check_square(A):
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"factorization needs a square matrix, got {A.shape}")
    return A


def _split_rows(n, lower_rows, upper_rows):
    L = _rows_to_csr(n, *zip(*lower_rows)) if n else as_csr(sp.csr_matrix((0, 0)))
    U = _rows_to_csr(n, *zip(*upper_rows)) if n else as_csr(sp.csr_matrix((0, 0)))
    return (TriangularOperator(L, "lower", unit_diagonal=True),
            TriangularOperator(U, "upper", unit_diagonal=False))


def ilu0(A):
    """Zero-fill incomplete LU (IKJ ordering restricted to the pattern of A)."""
    A = _check_square(A)
    n = A.shape[0]
    ptr, idx, val = A.indptr, A.indices, A.data
    # U rows as (cols, vals) with the diagonal first
    u_rows = [None] * n
    lower_rows, upper_rows = [], []
    for i in range(n):
        cols = idx[ptr[i]:ptr[i + 1]]
        w = val[ptr[i]:ptr[i + 1]].copy()
        pos = {int(c): k for k, c in enumerate(cols)}
        if i not in pos:
            raise ZeroPivotError(f"ILU(0): structurally missing diagonal in row {i}", row=i)
        for kk, k in enumerate(cols):
            if k >= i:
                break
            ucols, uvals = u_rows[k]
            w[kk] /= uvals[0]
            lik = w[kk]
            for j, ukj in zip(ucols[1:], uvals[1:]):
                t = pos.get(int(j))
                if t is not None:
                    w[t] -= lik * ukj
        di = pos[i]
        if w[di] == 0.0:
            raise ZeroPivotError(f"ILU(0): zero pivot in row {i}", row=i)
        lower_rows.append((cols[:di].astype(np.int64), w[:di]))
        upper_rows.append((cols[di:].astype(np.int64), w[di:]))
        u_rows[i] = (cols[di:], w[di:])
    L, U = _split_rows(n, lower_rows, upper_rows)
    return IluFactorization(L, U, droptol=0.0, lfil=None, form="LU")


def _largest(entries, lfil):
    # ties in magnitude go to the smaller column index
    if lfil is not None and len(entries) > lfil:
        entries = sorted(entries, key=lambda jv: (-abs(jv[1]), jv[0]))[:lfil]
    entries.sort(key=lambda jv: jv[0])
    return entries


def ilut(A, droptol=1e-2, lfil=5):
    """Dual-threshold ILUT.

    In row ``i`` an entry is dropped when its magnitude is below
    ``droptol * ||a_i||_2`` (2-norm of the original row).  Afterwards at most
    ``lfil`` off-diagonal entries per row are kept in each factor, choosing the
    largest magnitudes.  The diagonal is always kept.
    """
    if droptol < 0:
        raise ValueError("droptol must be non-negative")
    if lfil < 1:
        raise ValueError("lfil must be at least 1")
    A = _check_square(A)
    n = A.shape[0]
    ptr, idx, val = A.indptr, A.indices, A.data
    u_rows = [None] * n
    lower_rows, upper_rows = [], []
    for i in range(n):
        cols = idx[ptr[i]:ptr[i + 1]]
        vals = val[ptr[i]:ptr[i + 1]]
        tau = droptol * float(np.sqrt(np.dot(vals, vals)))
        w = dict(zip(cols.tolist(), vals.tolist()))
        heap = [c for c in w if c < i]
        heapq.heapify(heap)
        done = set()
        while heap:
            k = heapq.heappop(heap)
            if k in done:
                continue
            done.add(k)
            ukk, ucols, uvals = u_rows[k]
            wk = w[k] / ukk
            if abs(wk) < tau:
                del w[k]
                continue
            w[k] = wk
            for j, ukj in zip(ucols, uvals):
                if j in w:
                    w[j] -= wk * ukj
                else:
                    w[j] = -wk * ukj
                    if j < i:
                        heapq.heappush(heap, j)
        diag = w.pop(i, 0.0)
        if diag == 0.0:
            raise ZeroPivotError(f"ILUT: zero pivot in row {i}", row=i)
        low = [(j, v) for j, v in w.items() if j < i and abs(v) >= tau]
        up = [(j, v) for j, v in w.items() if j > i and abs(v) >= tau]
        low = _largest(low, lfil)
        up = _largest(up, lfil)
        lower_rows.append((np.array([j for j, _ in low], dtype=np.int64),
                           np.array([v for _, v in low], dtype=np.float64)))
        upper_rows.append((np.array([i] + [j for j, _ in up], dtype=np.int64),
                           np.array([diag] + [v for _, v in up], dtype=np.float64)))
        u_rows[i] = (diag, [j for j, _ in up], [v for _, v in up])
    L, U = _split_rows(n, lower_rows, upper_rows)
    return IluFactorization(L, U, droptol=float(droptol), lfil=int(lfil), form="LU")


def to_ldu(F):
    """Factor the diagonal out of ``U``: ``U = D (I + U_s)``."""
    if F.form == "LDU":
        return F
    d, Us = row_scale_to_unit_diag(F.U.matrix)
    return replace(F, d=d, Us=Us, form="LDU")
