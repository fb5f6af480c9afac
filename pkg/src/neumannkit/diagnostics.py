"""Non-normality and orthogonality metrics, and a priori bounds on the
departure from normality of scaled triangular factors."""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionError, DivergenceError
from .sparse import as_csr, diagonal, frobenius_norm, two_norm

__all__ = ["NormalityReport", "departure", "theorem1_bound", "theorem2_bounds",
           "theorem3_bound", "theorem4_bound", "loss_of_orthogonality", "s_matrix_norm",
           "is_triangular", "analyze_factorization", "DENSE_EIG_LIMIT"]

log = logging.getLogger(__name__)

DENSE_EIG_LIMIT = 5000


@dataclass(frozen=True)
class NormalityReport:
    """Henrici departure ``sqrt(||A||_F^2 - sum |lambda_i|^2)`` and its parts.

    ``clamped`` records that roundoff made the radicand negative and it was
    replaced by zero.
    """

    dep: float
    frob_norm: float
    eig_norm: float
    n: int
    method: str
    clamped: bool = False

    def to_dict(self):
        return asdict(self)


def is_triangular(A):
    C = as_csr(A).tocoo()
    nz = C.data != 0
    r, c = C.row[nz], C.col[nz]
    return bool(np.all(c >= r) or np.all(c <= r))


def departure(A):
    """Departure from normality of a square matrix.

    Triangular input uses its diagonal as the spectrum (any size); other
    matrices need a dense eigensolve and are limited to ``n <= 5000``.
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"departure: matrix is {A.shape}")
    fro = frobenius_norm(A)
    if is_triangular(A):
        method = "triangular_shortcut"
        eig = float(np.linalg.norm(diagonal(A)))
        # the strict part gives the departure without cancellation
        off = as_csr(A - sp.diags(diagonal(A)))
        return NormalityReport(frobenius_norm(off), fro, eig, n, method)
    if n > DENSE_EIG_LIMIT:
        raise ValueError(f"departure: dense eigensolve limited to n <= {DENSE_EIG_LIMIT}")
    method = "dense_eig"
    lam = sla.eigvals(A.toarray())
    eig = float(np.linalg.norm(lam))
    rad = fro * fro - eig * eig
    clamped = rad < 0
    if clamped:
        log.debug("departure: negative radicand %.3e clamped to zero", rad)
    return NormalityReport(math.sqrt(max(rad, 0.0)), fro, eig, n, method, bool(clamped))


def theorem1_bound(n, p):
    """``sqrt(n (p - 1))``: Frobenius bound for ``U_s`` with at most ``p``
    nonzeros per row of the scaled factor (entries bounded by one)."""
    if p < 2:
        raise ValueError("theorem1_bound: p must be at least 2")
    if n < 0:
        raise ValueError("theorem1_bound: n must be non-negative")
    return math.sqrt(n * (p - 1))


def theorem2_bounds(Us):
    """``(1 / sqrt(r), 1)`` bracketing ``||U_s||_2`` with ``r = rank(U_s)``.

    Returned only when the measured norms satisfy
    ``||U_s||_2 < 1 < ||U_s||_F``; otherwise ``None``.
    """
    M = as_csr(Us).toarray()
    if M.size == 0:
        return None
    sv = np.linalg.svd(M, compute_uv=False)
    s1 = float(sv[0])
    fro = float(np.linalg.norm(sv))
    if not (s1 < 1.0 < fro):
        return None
    tol = max(M.shape) * np.finfo(float).eps * s1
    rank = int(np.sum(sv > tol))
    return (1.0 / math.sqrt(rank), 1.0)


def theorem3_bound(n, nu):
    """``sqrt((2 sqrt(n) + nu) nu)`` with ``nu = ||U_s||_F``."""
    if nu < 0:
        raise ValueError("theorem3_bound: nu must be non-negative")
    return math.sqrt((2.0 * math.sqrt(n) + nu) * nu)


def theorem4_bound(n, delta):
    """``sqrt(n) (1 + delta)`` for a nearly diagonally dominant factor."""
    if delta < 0:
        raise ValueError("theorem4_bound: delta must be non-negative")
    return math.sqrt(n) * (1.0 + delta)


def loss_of_orthogonality(V):
    """``||I - V^T V||_F`` from the dense Gram matrix of the columns of ``V``."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] < 1:
        raise DimensionError(f"loss_of_orthogonality: need at least one column, got {V.shape}")
    G = V.T @ V
    return float(np.linalg.norm(np.eye(G.shape[0]) - G, "fro"))


def s_matrix_norm(V):
    """``||S||_2`` for ``S = (I + U)^{-1} U``, ``U`` the strict upper part of ``V^T V``.

    Zero for orthonormal columns; one once the columns are linearly dependent.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] < 1:
        raise DimensionError(f"s_matrix_norm: need at least one column, got {V.shape}")
    k = V.shape[1]
    if k == 1:
        return 0.0
    U = np.triu(V.T @ V, 1)
    S = sla.solve_triangular(np.eye(k) + U, U, lower=False, unit_diagonal=True)
    return float(np.linalg.norm(S, 2))


# --------------------------------------------------------------------------
# factor analysis report


def _trace_dicts(trace):
    return [tp._asdict() for tp in trace]


def _relres(num, den):
    return float(np.linalg.norm(num) / den) if den > 0 else 0.0


def analyze_factorization(A, droptol=1e-2, lfil=5, scaling="ldu", ordering="natural",
                          sweeps=3, power_max=20, permutation=None, seed=0):
    """Factor ``A`` with ILUT and report non-normality figures of the factors.

    The report holds ``dep(U)`` before and after scaling, ``||U_s||_F``,
    ``sigma_1(U_s)``, the near diagonal dominance ``delta``, the four theorem
    bounds (Theorem 1 with ``p = lfil + 1``), power traces of the Jacobi
    iteration matrices of ``L`` and the scaled ``U``, and relative residuals of
    ``sweeps`` Jacobi sweeps on ``L y = b`` and ``U v = y``.
    """
    from .factor import ilut, to_ldu
    from .scaling import (near_dd_delta, permute_symmetric, rcm_order, ruiz_scale,
                          bandwidth)
    from .trisolve import (TriangularOperator, direct_solve, iteration_matrix,
                           jacobi_solve, power_trace)

    A = as_csr(A)
    n = A.shape[0]
    report = {"n": int(n), "nnz": int(A.nnz), "droptol": droptol, "lfil": lfil,
              "scaling": scaling, "ordering": ordering, "sweeps": sweeps}
    report["bandwidth_before"] = bandwidth(A)
    if permutation is not None:
        A = permute_symmetric(A, permutation)
    elif ordering == "rcm":
        A = permute_symmetric(A, rcm_order(A))
    elif ordering != "natural":
        raise ValueError(f"unknown ordering {ordering!r}")
    report["bandwidth_after"] = bandwidth(A)

    F = ilut(A, droptol=droptol, lfil=lfil)
    U = F.U.matrix
    report["dep_U"] = departure(U).dep
    report["fill"] = {"L": int(F.L.matrix.nnz), "U": int(U.nnz)}

    if scaling == "ldu":
        ldu = to_ldu(F)
        Us = ldu.Us
        Ut = as_csr(Us + sp.identity(n, format="csr"))
        row_factor = 1.0 / ldu.d
    elif scaling == "ruiz":
        Ut, pair = ruiz_scale(U)
        Us = as_csr(Ut - sp.diags(diagonal(Ut)))
        report["ruiz_iterations"] = pair.iterations_used
        row_factor = pair.d_row
    elif scaling == "none":
        Ut = U
        row_factor = np.ones(n)
        Us = as_csr(sp.diags(1.0 / diagonal(U)) @ (U - sp.diags(diagonal(U))))
    else:
        raise ValueError(f"unknown scaling {scaling!r}")

    nu = frobenius_norm(Us)
    delta = near_dd_delta(Ut)
    report["dep_U_scaled"] = departure(Ut).dep
    report["Us_frobenius"] = nu
    report["Us_sigma1"] = two_norm(Us)
    report["delta"] = delta
    report["bounds"] = {
        "theorem1": theorem1_bound(n, lfil + 1) if n else 0.0,
        "theorem1_p": lfil + 1,
        "theorem2": theorem2_bounds(Us) if n <= 2000 else None,
        "theorem3": theorem3_bound(n, nu),
        "theorem4": theorem4_bound(n, delta),
    }
    L_op = F.L
    U_op = TriangularOperator.from_matrix(Ut, "upper")
    report["power_trace"] = {
        "G_L": _trace_dicts(power_trace(iteration_matrix(L_op), power_max)),
        "G_U": _trace_dicts(power_trace(iteration_matrix(U_op), power_max)),
    }

    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    res = {}
    try:
        yk = jacobi_solve(L_op, b, sweeps, source="L")
        res["L"] = _relres(b - L_op.matvec(yk), np.linalg.norm(b))
    except DivergenceError as exc:
        res["L"] = math.inf
        log.warning("%s", exc)
    # upper solve on the scaled system
    y = row_factor * direct_solve(L_op, b)
    try:
        vk = jacobi_solve(U_op, y, sweeps, source="U")
        res["U"] = _relres(y - U_op.matvec(vk), np.linalg.norm(y))
    except DivergenceError as exc:
        res["U"] = math.inf
        log.warning("%s", exc)
    report["triangular_relres"] = res
    return report
