"""One-reduce MGS-GMRES with an inverse compact WY projector.

Each iteration performs a single fused reduction ``V^T [v, w]`` that yields
both the new row of the strictly lower correction ``L`` (from the lagged,
not-yet-normalized basis vector ``v``) and the projection coefficients of the
new direction ``w``.  The coefficients are corrected by

* ``t_full``: ``T = (I + L)^{-1}`` (small triangular solve),
* ``t_truncated``: ``T = I - L`` (truncated Neumann series; ``degree`` > 1
  keeps more terms),
* ``classical_mgs``: sequential modified Gram-Schmidt, one reduction per
  basis vector (reference baseline).

Right preconditioning: ``A M^{-1} u = b`` with ``x = x0 + M^{-1} V y``.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, SolverError
from .diagnostics import loss_of_orthogonality, s_matrix_norm
from .sparse import as_csr, fused_multidot, inf_norm

__all__ = ["GmresConfig", "KrylovState", "SolveReport", "gmres_solve", "apply_correction",
           "icwy_project", "nrbe", "stall_detect", "s_matrix_norm", "loss_of_orthogonality",
           "PROJECTIONS", "STALL_THRESHOLD"]

PROJECTIONS = ("t_full", "t_truncated", "classical_mgs")
STALL_THRESHOLD = 1.0 - 1e-8


@dataclass(frozen=True)
class GmresConfig:
    """Solver settings.

    ``preconditioner`` is any callable ``z = M^{-1} v`` (an
    :class:`~neumannkit.amg.AmgHierarchy` works directly).  With
    ``record_diagnostics`` the basis is checked every iteration for loss of
    orthogonality and ``||S_k||_2``, and a stall terminates the solve.
    """

    max_iters: int = 100
    tol: float = 1e-5
    stop_rule: str = "relres"
    projection: str = "t_truncated"
    degree: int = 1
    preconditioner: Optional[Callable] = field(default=None, compare=False, repr=False)
    record_diagnostics: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.stop_rule not in ("relres", "nrbe"):
            raise ValueError(f"unknown stop_rule {self.stop_rule!r}")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.degree < 1:
            raise ValueError("degree must be at least 1")


@dataclass
class KrylovState:
    """Working storage for one solve.

    ``V`` holds ``k + 1`` normalized columns followed by the lagged vector;
    ``L`` is the strictly lower correction; ``H`` is the Hessenberg matrix,
    overwritten in place by the Givens rotations so that its leading block is
    the triangular ``R``; ``g`` is the rotated right-hand side.
    """

    V: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    H: np.ndarray
    cs: np.ndarray
    sn: np.ndarray
    g: np.ndarray
    k: int = 0

    @classmethod
    def allocate(cls, n, m):
        cap = m + 2
        return cls(V=np.zeros((n, cap), order="F"), Z=np.zeros((n, cap), order="F"),
                   L=np.zeros((cap, cap)), H=np.zeros((cap, cap)),
                   cs=np.zeros(cap), sn=np.zeros(cap), g=np.zeros(cap))

    @property
    def residual_norm(self):
        return abs(self.g[self.k])


@dataclass
class SolveReport:
    iterations: int = 0
    relres: List[float] = field(default_factory=list)
    nrbe: List[float] = field(default_factory=list)
    loo: List[float] = field(default_factory=list)
    s_norm: List[float] = field(default_factory=list)
    kappa_B: List[float] = field(default_factory=list)
    termination: str = "max_iters"
    final_relres: float = math.nan
    reductions: int = 0
    projection: str = "t_truncated"
    timings: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.termination.startswith("converged")

    def to_dict(self, include_timings=False):
        out = {
            "iterations": self.iterations,
            "termination": self.termination,
            "final_relres": self.final_relres,
            "reductions": self.reductions,
            "projection": self.projection,
            "history": {
                "relres": self.relres,
                "nrbe": self.nrbe,
                "loo": self.loo,
                "s_norm": self.s_norm,
            },
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, include_timings=False):
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True)

    def history_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "relres", "nrbe", "loo", "s_norm"])
        for i in range(self.iterations):
            loo = repr(self.loo[i]) if i < len(self.loo) else ""
            sn = repr(self.s_norm[i]) if i < len(self.s_norm) else ""
            writer.writerow([i + 1, repr(self.relres[i]), repr(self.nrbe[i]), loo, sn])
        return buf.getvalue()


def apply_correction(L, c, mode, degree=1):
    """Apply the correction matrix ``T`` to coefficients ``c``.

    ``t_full`` solves ``(I + L) h = c``; ``t_truncated`` evaluates
    ``sum_{j=0}^{degree} (-L)^j c``.
    """
    L = np.asarray(L, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if L.shape != (c.size, c.size):
        raise DimensionError(f"apply_correction: L {L.shape}, c {c.shape}")
    if mode == "t_full":
        if c.size == 0:
            return c.copy()
        return sla.solve_triangular(L, c, lower=True, unit_diagonal=True)
    if mode == "t_truncated":
        h = c.copy()
        term = c
        for _ in range(degree):
            term = -(L @ term)
            h = h + term
        return h
    raise ValueError(f"apply_correction: unsupported mode {mode!r}")


def icwy_project(V, L, w, mode, degree=1):
    """Project ``w`` against the columns of ``V``.

    Returns the projected vector and the coefficients.  ``L`` is the strictly
    lower part of ``V^T V`` as accumulated by the solver (pass zeros for an
    orthonormal basis).
    """
    V = np.asarray(V, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if V.ndim != 2 or w.shape != (V.shape[0],):
        raise DimensionError(f"icwy_project: V {V.shape}, w {w.shape}")
    k = V.shape[1]
    if mode == "classical_mgs":
        w = w.copy()
        h = np.zeros(k)
        for j in range(k):
            h[j] = V[:, j] @ w
            w -= h[j] * V[:, j]
        return w, h
    c = V.T @ w
    h = apply_correction(np.asarray(L)[:k, :k], c, mode, degree)
    return w - V @ h, h


def nrbe(A, x, b, r_norm, A_inf=None):
    """Norm-wise relative backward error ``||r|| / (||b|| + ||A||_inf ||x||)``.

    Pass ``A_inf`` to reuse a precomputed ``||A||_inf``.
    """
    A_inf = inf_norm(as_csr(A)) if A_inf is None else A_inf
    return _backward_error(A_inf, x, float(np.linalg.norm(b)), r_norm)


def _backward_error(A_inf, x, b_norm, r_norm):
    denom = b_norm + A_inf * float(np.linalg.norm(x))
    if denom == 0.0:
        return 0.0 if r_norm == 0.0 else math.inf
    return float(r_norm / denom)


def stall_detect(V):
    """True once ``||S_k||_2 >= 1 - 1e-8`` (the basis has lost independence)."""
    return s_matrix_norm(V) >= STALL_THRESHOLD


def _rotate(state, j):
    """Apply stored rotations to column ``j`` of H, then a new one."""
    H, cs, sn, g = state.H, state.cs, state.sn, state.g
    for i in range(j):
        a, b = H[i, j], H[i + 1, j]
        H[i, j] = cs[i] * a + sn[i] * b
        H[i + 1, j] = -sn[i] * a + cs[i] * b
    a, b = H[j, j], H[j + 1, j]
    rho = math.hypot(a, b)
    if rho == 0.0:
        cs[j], sn[j] = 1.0, 0.0
    else:
        cs[j], sn[j] = a / rho, b / rho
    H[j, j] = rho
    H[j + 1, j] = 0.0
    g[j + 1] = -sn[j] * g[j]
    g[j] = cs[j] * g[j]


def _least_squares(state, k):
    if k == 0:
        return np.zeros(0)
    R = state.H[:k, :k]
    diag = np.diag(R)
    if np.any(diag == 0.0):
        # singular R after breakdown: minimum-norm least squares
        return np.linalg.lstsq(R, state.g[:k], rcond=None)[0]
    return sla.solve_triangular(R, state.g[:k], lower=False)


def _check_finite(values, iteration, what):
    if not np.all(np.isfinite(values)):
        raise SolverError(f"non-finite {what} at iteration {iteration}", iteration=iteration)


def gmres_solve(A, b, x0=None, cfg=None):
    """Solve ``A x = b`` with right-preconditioned one-reduce MGS-GMRES.

    Returns
    -------
    x : ndarray
    report : SolveReport
        Per-iteration implicit relative residual (``|g_k| / ||b||``), NRBE
        from the implicit residual, and (with ``record_diagnostics``) the
        loss of orthogonality, ``||S_k||_2`` and ``kappa_2([r0, A M^{-1} V_k])``.
    """
    cfg = GmresConfig() if cfg is None else cfg
    A = as_csr(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=np.float64)
    if A.shape[1] != n or b.shape != (n,):
        raise DimensionError(f"gmres_solve: A {A.shape}, b {b.shape}")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise DimensionError(f"gmres_solve: x0 {x0.shape}")
    precond = cfg.preconditioner if cfg.preconditioner is not None else (lambda v: v)

    report = SolveReport(projection=cfg.projection)
    A_inf = inf_norm(A)
    b_norm = float(np.linalg.norm(b))
    r0 = b - A @ x0
    r0_norm = float(np.linalg.norm(r0))
    scale = b_norm if b_norm > 0 else r0_norm
    if r0_norm == 0.0:
        report.termination = "converged_relres" if cfg.stop_rule == "relres" else "converged_nrbe"
        report.final_relres = 0.0
        return x0.copy(), report

    if cfg.projection == "classical_mgs":
        run = _run_classical
    else:
        run = _run_icwy
    x = run(A, b, x0, r0, cfg, precond, report, A_inf, b_norm, scale)
    r = b - A @ x
    report.final_relres = float(np.linalg.norm(r)) / scale
    return x, report


def _record(state, k, x0, cfg, report, A_inf, b_norm, scale, diag_V=None, B=None):
    """Book-keeping after column ``k - 1`` of H is complete.

    Returns (x_k, stop reason or None).
    """
    y = _least_squares(state, k)
    x = x0 + state.Z[:, :k] @ y
    res = float(state.residual_norm)
    relres = res / scale
    beta = float(_backward_error(A_inf, x, b_norm, res))
    _check_finite([relres, beta], k, "residual")
    report.iterations = k
    report.relres.append(relres)
    report.nrbe.append(beta)
    reason = None
    if cfg.record_diagnostics and diag_V is not None:
        report.loo.append(loss_of_orthogonality(diag_V))
        s = s_matrix_norm(diag_V)
        report.s_norm.append(s)
        report.kappa_B.append(float(np.linalg.cond(B)))
        if s >= STALL_THRESHOLD:
            reason = "stall"
    if cfg.stop_rule == "relres" and relres <= cfg.tol:
        reason = "converged_relres"
    elif cfg.stop_rule == "nrbe" and beta <= cfg.tol:
        reason = "converged_nrbe"
    return x, reason


def _run_icwy(A, b, x0, r0, cfg, precond, report, A_inf, b_norm, scale):
    n, m = A.shape[0], cfg.max_iters
    st = KrylovState.allocate(n, m)
    V, Z, L, H = st.V, st.Z, st.L, st.H
    B = np.zeros((n, m + 2), order="F") if cfg.record_diagnostics else None
    V[:, 0] = r0
    if B is not None:
        B[:, 0] = r0
    x = x0.copy()
    for k in range(m + 1):
        # lagged vector V[:, k] is projected but not yet normalized
        z = np.array(precond(V[:, k]), dtype=np.float64)
        w = A @ z
        a, c = fused_multidot(V[:, :k + 1], V[:, k], w)
        report.reductions += 1
        _check_finite(c, k, "projection coefficients")
        r = math.sqrt(a[k]) if a[k] > 0 else 0.0
        if k == 0:
            st.g[0] = r
        else:
            H[k, k - 1] = r
        if r == 0.0:
            # happy breakdown: the Krylov space is invariant
            _rotate(st, k - 1)
            st.k = k
            x, _ = _record(st, k, x0, cfg, report, A_inf, b_norm, scale)
            report.termination = ("converged_relres" if cfg.stop_rule == "relres"
                                  else "converged_nrbe")
            return x
        V[:, k] /= r
        Z[:, k] = z / r
        w /= r
        L[k, :k] = a[:k] / r
        c[:k] /= r
        c[k] /= r * r
        if B is not None:
            B[:, k + 1] = w
        if k > 0:
            _rotate(st, k - 1)
            st.k = k
            diag_V = V[:, :k + 1] if cfg.record_diagnostics else None
            x, reason = _record(st, k, x0, cfg, report, A_inf, b_norm, scale,
                                diag_V, None if B is None else B[:, :k + 1])
            if reason is not None:
                report.termination = reason
                return x
            if k == m:
                break
        h = apply_correction(L[:k + 1, :k + 1], c, cfg.projection, cfg.degree)
        V[:, k + 1] = w - V[:, :k + 1] @ h
        H[:k + 1, k] = h
    report.termination = "max_iters"
    return x


def _run_classical(A, b, x0, r0, cfg, precond, report, A_inf, b_norm, scale):
    n, m = A.shape[0], cfg.max_iters
    st = KrylovState.allocate(n, m)
    V, Z, H = st.V, st.Z, st.H
    B = np.zeros((n, m + 1), order="F") if cfg.record_diagnostics else None
    beta = float(np.linalg.norm(r0))
    report.reductions += 1
    V[:, 0] = r0 / beta
    st.g[0] = beta
    if B is not None:
        B[:, 0] = r0
    x = x0.copy()
    for j in range(m):
        Z[:, j] = np.asarray(precond(V[:, j]), dtype=np.float64)
        w = A @ Z[:, j]
        if B is not None:
            B[:, j + 1] = w
        w, h = icwy_project(V[:, :j + 1], None, w, "classical_mgs")
        report.reductions += j + 1
        hnext = float(np.linalg.norm(w))
        report.reductions += 1
        _check_finite(np.append(h, hnext), j + 1, "Hessenberg column")
        H[:j + 1, j] = h
        H[j + 1, j] = hnext
        _rotate(st, j)
        st.k = j + 1
        if hnext > 0:
            V[:, j + 1] = w / hnext
        diag_V = V[:, :j + 2] if cfg.record_diagnostics else None
        x, reason = _record(st, j + 1, x0, cfg, report, A_inf, b_norm, scale,
                            diag_V, None if B is None else B[:, :j + 2])
        if hnext == 0.0:
            report.termination = ("converged_relres" if cfg.stop_rule == "relres"
                                  else "converged_nrbe")
            return x
        if reason is not None:
            report.termination = reason
            return x
    report.termination = "max_iters"
    return x
