"""Classical (Ruge-Stuben) algebraic multigrid.

Setup: strength of connection, PMIS coarsening, BAMG-direct or MM-ext
interpolation, optional aggressive (two-stage) coarsening, interpolation
truncation and Galerkin coarse operators.  The resulting hierarchy applies one
V-cycle per call and is used as a right preconditioner for GMRES.
"""

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionError, InterpolationError
from .smoothers import Smoother, SmootherConfig
from .sparse import as_csr, diagonal, galerkin_triple, pattern, spgemm, submatrix

__all__ = ["CfSplitting", "AmgConfig", "AmgLevel", "AmgHierarchy", "strength_matrix",
           "aggressive_strength", "pmis_coarsen", "ensure_interpolatory",
           "bamg_direct_interp", "mm_ext_interp", "truncate_interp", "build_hierarchy",
           "vcycle_apply", "stationary_iteration"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CfSplitting:
    """Coarse/fine marker per point (``True`` = C)."""

    is_coarse: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "is_coarse", np.asarray(self.is_coarse, dtype=bool))

    @property
    def coarse(self):
        return np.flatnonzero(self.is_coarse)

    @property
    def fine(self):
        return np.flatnonzero(~self.is_coarse)

    @property
    def n_coarse(self):
        return int(self.is_coarse.sum())

    def coarse_index(self):
        """Coarse-grid number of each C point (-1 at F points)."""
        idx = np.cumsum(self.is_coarse) - 1
        return np.where(self.is_coarse, idx, -1)


@dataclass(frozen=True)
class AmgConfig:
    """Setup and cycle parameters.

    ``max_elements_per_row = 0`` disables the stencil-width cap and
    ``truncation_threshold = 0`` disables relative truncation.  The
    ``coarse_smoother`` (if set) replaces ``smoother`` on levels below the
    finest, e.g. ILU on the fine level and polynomial Gauss-Seidel elsewhere.
    """

    theta: float = 0.25
    max_levels: int = 25
    min_coarse_size: int = 50
    interpolation: str = "mm_ext"
    truncation_threshold: float = 0.0
    max_elements_per_row: int = 0
    aggressive_levels: int = 0
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    coarse_smoother: Optional[SmootherConfig] = None
    rng_seed: int = 0
    coarse_dense_limit: int = 200
    coarse_sweeps: int = 20

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if self.interpolation not in ("bamg_direct", "mm_ext"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")
        if self.truncation_threshold < 0 or self.max_elements_per_row < 0:
            raise ValueError("truncation parameters must be non-negative")


@dataclass
class AmgLevel:
    A: sp.csr_matrix
    P: Optional[sp.csr_matrix] = None
    splitting: Optional[CfSplitting] = None
    smoother: Optional[Smoother] = None

    @property
    def R(self):
        return None if self.P is None else self.P.T


# --------------------------------------------------------------------------
# strength of connection


def strength_matrix(A, theta):
    """Strong-influence pattern: ``|a_ij| >= theta max_{k != i} |a_ik|``.

    The diagonal and explicitly stored zeros are never strong.
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"strength_matrix: matrix is {A.shape}")
    n = A.shape[0]
    C = A.tocoo()
    off = (C.row != C.col) & (C.data != 0.0)
    mag = np.abs(C.data)
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, C.row[off], mag[off])
    strong = off & (mag >= theta * rowmax[C.row])
    return as_csr(sp.coo_matrix((np.ones(int(strong.sum())), (C.row[strong], C.col[strong])),
                                shape=A.shape))


def aggressive_strength(S):
    """Pattern of ``S^2 + S`` without the diagonal (paths of length <= 2)."""
    S = pattern(S)
    SA = pattern(spgemm(S, S) + S)
    SA.setdiag(0.0)
    SA.eliminate_zeros()
    SA.data[:] = 1.0
    return SA


# --------------------------------------------------------------------------
# PMIS coarsening


def _uniforms(n, seed, stream):
    # counter-based generator: value i depends only on (seed, stream, i)
    bitgen = np.random.Philox(key=np.array([seed & (2**64 - 1), stream], dtype=np.uint64))
    return np.random.Generator(bitgen).random(n)


def _symmetrized(S):
    G = pattern(S)
    G = pattern(G + G.T)
    G.setdiag(0.0)
    G.eliminate_zeros()
    G.data[:] = 1.0
    return G


def _row_max(G, values):
    """Max of ``values[j]`` over each row's neighbors (``-inf`` if none)."""
    out = np.full(G.shape[0], -np.inf)
    if G.nnz == 0:
        return out
    vals = values[G.indices]
    nonempty = np.diff(G.indptr) > 0
    starts = G.indptr[:-1][nonempty]
    out[nonempty] = np.maximum.reduceat(vals, starts)
    return out


def _independent_set(G, measure, eligible):
    """Luby-style selection on graph ``G`` among ``eligible`` points.

    Returns (C mask, F mask).  Neighbors of selected points become F.
    """
    n = G.shape[0]
    undecided = eligible.copy()
    is_c = np.zeros(n, dtype=bool)
    is_f = np.zeros(n, dtype=bool)
    order_key = np.arange(n)
    while undecided.any():
        m = np.where(undecided, measure, -np.inf)
        nbr = _row_max(G, m)
        sel = undecided & (m > nbr)
        if not sel.any():
            # exact ties: fall back to the lowest index among the maxima
            cand = np.flatnonzero(undecided & (m == m.max()))
            sel = np.zeros(n, dtype=bool)
            sel[order_key[cand].min()] = True
        is_c |= sel
        undecided &= ~sel
        hit = np.zeros(n, dtype=bool)
        if G.nnz:
            hit = (G @ sel.astype(np.float64)) > 0
        newf = undecided & hit
        is_f |= newf
        undecided &= ~newf
    return is_c, is_f


def pmis_coarsen(S, rng_seed=0, stream=0):
    """PMIS coarsening on the strength pattern ``S``.

    Measure of point ``i``: number of points it strongly influences plus a
    uniform ``[0, 1)`` draw keyed by ``(rng_seed, stream, i)``.  Points that
    influence nobody start as F.  The selected C set is independent and
    maximal in the symmetrized strong graph.
    """
    S = pattern(S)
    n = S.shape[0]
    G = _symmetrized(S)
    influence = np.asarray(S.sum(axis=0)).ravel() if n else np.zeros(0)
    measure = influence + _uniforms(n, rng_seed, stream)
    eligible = measure >= 1.0
    is_c, _ = _independent_set(G, measure, eligible)
    return CfSplitting(is_c)


def ensure_interpolatory(S, splitting, rng_seed=0, stream=0):
    """Promote F points that have strong connections but no strong C neighbor.

    Repeated PMIS passes on the subgraph of such points; points with an empty
    strength row stay F and receive a zero interpolation row.
    """
    S = pattern(S)
    n = S.shape[0]
    is_c = splitting.is_coarse.copy()
    has_strong = np.diff(S.indptr) > 0
    G = _symmetrized(S)
    passes = 0
    while True:
        c_nbrs = S @ is_c.astype(np.float64)
        bad = (~is_c) & has_strong & (c_nbrs == 0)
        if not bad.any():
            break
        passes += 1
        idx = np.flatnonzero(bad)
        sub = submatrix(G, idx, idx)
        deg = np.diff(sub.indptr).astype(np.float64)
        measure = deg + _uniforms(idx.size, rng_seed, 1000 + 1000 * stream + passes)
        sel, _ = _independent_set(sub, measure, np.ones(idx.size, dtype=bool))
        is_c[idx[sel]] = True
    return CfSplitting(is_c)


# --------------------------------------------------------------------------
# interpolation


def _assemble_P(n, splitting, f_rows, f_cols, f_vals):
    cidx = splitting.coarse_index()
    cpts = splitting.coarse
    nc = cpts.size
    rows = np.concatenate((np.asarray(f_rows, dtype=np.int64), cpts))
    cols = np.concatenate((np.asarray(f_cols, dtype=np.int64), cidx[cpts]))
    vals = np.concatenate((np.asarray(f_vals, dtype=np.float64), np.ones(nc)))
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, nc)))


def _bamg_row(i, cols, vals, strong, is_c, cidx, aii):
    """BAMG-direct weights for one F row; returns (coarse cols, weights)."""
    cs, cs_vals = [], []
    beta = 0.0
    denom = aii
    for j, a in zip(cols, vals):
        if j == i:
            continue
        if j in strong:
            if is_c[j]:
                cs.append(cidx[j])
                cs_vals.append(a)
            else:
                beta += a          # strong F neighbor: distributed
        elif is_c[j]:
            beta += a              # weak C neighbor: distributed
        else:
            denom += a             # weak F neighbor: lumped to the diagonal
    if not cs:
        return [], []
    if denom == 0.0:
        raise InterpolationError(f"BAMG-direct: zero denominator in row {i}")
    share = beta / len(cs)
    return cs, [-(a + share) / denom for a in cs_vals]


def bamg_direct_interp(A, S, splitting, fallback=True):
    """Bootstrap-AMG direct interpolation targeting the constant vector.

    For F point ``i`` with strong C neighbors ``C_i^s``::

        w_ij = -(a_ij + beta_i / |C_i^s|) / (a_ii + sum_{weak F k} a_ik)
        beta_i = sum over strong F and weak C neighbors of a_ik

    which reproduces ``(P 1)_i = 1`` when ``A`` has zero row sums.  F rows
    without strong C neighbors get a zero row when ``fallback`` is set and
    raise :class:`InterpolationError` otherwise.
    """
    A = as_csr(A)
    S = pattern(S)
    n = A.shape[0]
    is_c = splitting.is_coarse
    cidx = splitting.coarse_index()
    d = diagonal(A)
    rows, cols_out, vals_out = [], [], []
    for i in splitting.fine:
        lo, hi = A.indptr[i], A.indptr[i + 1]
        strong = set(S.indices[S.indptr[i]:S.indptr[i + 1]].tolist())
        cs, w = _bamg_row(i, A.indices[lo:hi].tolist(), A.data[lo:hi].tolist(),
                          strong, is_c, cidx, d[i])
        if not cs:
            if not fallback:
                raise InterpolationError(f"F point {i} has no strong C neighbor")
            continue
        rows.extend([i] * len(cs))
        cols_out.extend(cs)
        vals_out.extend(w)
    return _assemble_P(n, splitting, rows, cols_out, vals_out)


def _strong_weak_parts(A, S):
    A = as_csr(A)
    offd = as_csr(A - sp.diags(diagonal(A)))
    offd.eliminate_zeros()
    mask = as_csr(pattern(S).multiply(pattern(offd)))
    As = as_csr(offd.multiply(mask))
    Aw = as_csr(offd - As)
    As.eliminate_zeros()
    Aw.eliminate_zeros()
    return As, Aw


def mm_ext_interp(A, S, splitting, fallback=True):
    """Extended interpolation assembled from FF/FC blocks by matrix products.

    ``W = -[(D_FF + D_gamma)^{-1} (A^s_FF + D_beta)] [D_beta^{-1} A^s_FC]`` with
    ``D_beta = diag(A^s_FC 1)`` and ``D_gamma = diag(A^w_FF 1 + A^w_FC 1)``.
    Rows with ``D_beta = 0`` use the BAMG-direct row instead.
    """
    A = as_csr(A)
    n = A.shape[0]
    fpts, cpts = splitting.fine, splitting.coarse
    if fpts.size == 0:
        return _assemble_P(n, splitting, [], [], [])
    As, Aw = _strong_weak_parts(A, S)
    As_FF = submatrix(As, fpts, fpts)
    As_FC = submatrix(As, fpts, cpts)
    Aw_FF = submatrix(Aw, fpts, fpts)
    Aw_FC = submatrix(Aw, fpts, cpts)
    d_ff = diagonal(A)[fpts]
    beta = np.asarray(As_FC @ np.ones(cpts.size)).ravel()
    gamma = (np.asarray(Aw_FF @ np.ones(fpts.size)).ravel()
             + np.asarray(Aw_FC @ np.ones(cpts.size)).ravel())
    denom = d_ff + gamma
    if np.any(denom == 0.0):
        k = int(np.flatnonzero(denom == 0.0)[0])
        raise InterpolationError(f"MM-ext: singular D_FF + D_gamma at point {fpts[k]}")
    with np.errstate(divide="ignore"):
        beta_inv = np.where(beta != 0.0, 1.0 / np.where(beta != 0.0, beta, 1.0), 0.0)
    left = as_csr(sp.diags(-1.0 / denom) @ (As_FF + sp.diags(beta)))
    right = as_csr(sp.diags(beta_inv) @ As_FC)
    W = spgemm(left, right).tocoo()

    keep = beta[W.row] != 0.0
    rows = list(fpts[W.row[keep]])
    cols = list(W.col[keep])
    vals = list(W.data[keep])

    redo = np.flatnonzero(beta == 0.0)
    if redo.size:
        S = pattern(S)
        is_c, cidx, d = splitting.is_coarse, splitting.coarse_index(), diagonal(A)
        for k in redo:
            i = fpts[k]
            lo, hi = A.indptr[i], A.indptr[i + 1]
            strong = set(S.indices[S.indptr[i]:S.indptr[i + 1]].tolist())
            cs, w = _bamg_row(i, A.indices[lo:hi].tolist(), A.data[lo:hi].tolist(),
                              strong, is_c, cidx, d[i])
            if not cs and not fallback:
                raise InterpolationError(f"F point {i} has no strong C neighbor")
            rows.extend([i] * len(cs))
            cols.extend(cs)
            vals.extend(w)
    return _assemble_P(n, splitting, rows, cols, vals)


def truncate_interp(P, threshold=0.0, max_per_row=0):
    """Drop small interpolation weights and cap the row length.

    Per row: entries below ``threshold * max |p_ij|`` are dropped, then at
    most ``max_per_row`` largest are kept (0 = no cap, ties to the smaller
    column), and the kept entries are rescaled to preserve the row sum.
    """
    if threshold < 0 or max_per_row < 0:
        raise ValueError("truncation parameters must be non-negative")
    P = as_csr(P)
    if threshold == 0.0 and max_per_row == 0:
        return P
    indptr, indices, data = P.indptr, P.indices, P.data
    new_rows, new_cols, new_vals = [], [], []
    for i in range(P.shape[0]):
        lo, hi = indptr[i], indptr[i + 1]
        cols, vals = indices[lo:hi], data[lo:hi]
        if hi - lo > 1:
            mag = np.abs(vals)
            keep = mag >= threshold * mag.max()
            cols_k, vals_k = cols[keep], vals[keep]
            if max_per_row and cols_k.size > max_per_row:
                order = np.lexsort((cols_k, -np.abs(vals_k)))[:max_per_row]
                order.sort()
                cols_k, vals_k = cols_k[order], vals_k[order]
            total, kept = vals.sum(), vals_k.sum()
            if kept != 0.0 and cols_k.size < cols.size:
                vals_k = vals_k * (total / kept)
            cols, vals = cols_k, vals_k
        new_rows.extend([i] * len(cols))
        new_cols.extend(cols.tolist())
        new_vals.extend(vals.tolist())
    return as_csr(sp.coo_matrix((new_vals, (new_rows, new_cols)), shape=P.shape))


# --------------------------------------------------------------------------
# hierarchy


class _CoarseSolver:
    """Dense LU for small coarse grids, symmetric Gauss-Seidel otherwise."""

    def __init__(self, A, dense_limit, sweeps):
        self.A = A
        n = A.shape[0]
        self.kind = "dense_lu" if n <= dense_limit else "gs_sweeps"
        if self.kind == "dense_lu":
            dense = A.toarray()
            self.pinv = None
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                try:
                    self.lu = sla.lu_factor(dense)
                    if np.any(np.diag(self.lu[0]) == 0.0):
                        raise sla.LinAlgError("singular")
                except (sla.LinAlgError, sla.LinAlgWarning):
                    # singular coarse operator: least-squares solve
                    self.pinv = np.linalg.pinv(dense)
        else:
            self.smoother = Smoother(A, SmootherConfig(kind="gs_symmetric", sweeps=sweeps))

    def solve(self, b):
        if b.size == 0:
            return b.copy()
        if self.kind == "dense_lu":
            if self.pinv is not None:
                return self.pinv @ b
            return sla.lu_solve(self.lu, b)
        return self.smoother.presmooth(np.zeros_like(b), b)


@dataclass
class AmgHierarchy:
    levels: List[AmgLevel]
    coarse_solver: _CoarseSolver
    config: AmgConfig
    status: str = "ok"

    @property
    def n(self):
        return self.levels[0].A.shape[0]

    @property
    def operator_complexity(self):
        nnz0 = self.levels[0].A.nnz
        return sum(lv.A.nnz for lv in self.levels) / nnz0 if nnz0 else 1.0

    @property
    def grid_complexity(self):
        n0 = self.levels[0].A.shape[0]
        return sum(lv.A.shape[0] for lv in self.levels) / n0 if n0 else 1.0

    def summary(self):
        rows = []
        for k, lv in enumerate(self.levels):
            n, nnz = lv.A.shape[0], lv.A.nnz
            entry = {"level": k, "n": int(n), "nnz": int(nnz)}
            if k > 0:
                prev = self.levels[k - 1].A.shape[0]
                entry["coarsening_ratio"] = prev / n
                entry["nnz_ratio"] = self.levels[k - 1].A.nnz / nnz if nnz else None
            rows.append(entry)
        return {
            "levels": rows,
            "num_levels": len(self.levels),
            "operator_complexity": self.operator_complexity,
            "grid_complexity": self.grid_complexity,
            "coarse_solver": self.coarse_solver.kind,
            "status": self.status,
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def __call__(self, r):
        return vcycle_apply(self, r)


def _interpolate(A, S, splitting, cfg):
    if cfg.interpolation == "bamg_direct":
        return bamg_direct_interp(A, S, splitting)
    return mm_ext_interp(A, S, splitting)


def _coarsen(A, S, cfg, stream):
    split = pmis_coarsen(S, cfg.rng_seed, stream)
    return ensure_interpolatory(S, split, cfg.rng_seed, stream)


def _two_stage(A, S, cfg, level):
    """Aggressive coarsening: second PMIS on the CC block of ``S^2 + S``."""
    split1 = _coarsen(A, S, cfg, 2 * level)
    P1 = truncate_interp(_interpolate(A, S, split1, cfg),
                         cfg.truncation_threshold, cfg.max_elements_per_row)
    c1 = split1.coarse
    SA = submatrix(aggressive_strength(S), c1, c1)
    split2 = _coarsen(None, SA, cfg, 2 * level + 1)
    A1 = galerkin_triple(P1, A)
    P2 = truncate_interp(_interpolate(A1, SA, split2, cfg),
                         cfg.truncation_threshold, cfg.max_elements_per_row)
    is_c = np.zeros(A.shape[0], dtype=bool)
    is_c[c1[split2.is_coarse]] = True
    return spgemm(P1, P2), CfSplitting(is_c)


def build_hierarchy(A, cfg=None):
    """Build the multigrid hierarchy for ``A``.

    Levels are added until ``max_levels`` is reached, the operator is at most
    ``min_coarse_size``, or coarsening stagnates (reported in ``status``).
    """
    cfg = AmgConfig() if cfg is None else cfg
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"build_hierarchy: matrix is {A.shape}")
    levels = []
    status = "ok"
    Ak = A
    for k in range(cfg.max_levels - 1):
        n = Ak.shape[0]
        if n <= cfg.min_coarse_size:
            break
        S = strength_matrix(Ak, cfg.theta)
        if k < cfg.aggressive_levels:
            P, split = _two_stage(Ak, S, cfg, k)
        else:
            split = _coarsen(Ak, S, cfg, 2 * k)
            P = truncate_interp(_interpolate(Ak, S, split, cfg),
                                cfg.truncation_threshold, cfg.max_elements_per_row)
        nc = P.shape[1]
        if nc == 0 or nc >= n:
            status = "stagnation"
            log.warning("coarsening stagnated on level %d (n=%d, nc=%d)", k, n, nc)
            break
        smoother_cfg = cfg.smoother if (k == 0 or cfg.coarse_smoother is None) else cfg.coarse_smoother
        levels.append(AmgLevel(Ak, P, split, Smoother(Ak, smoother_cfg)))
        Ak = galerkin_triple(P, Ak)
    levels.append(AmgLevel(Ak))
    coarse = _CoarseSolver(Ak, cfg.coarse_dense_limit, cfg.coarse_sweeps)
    return AmgHierarchy(levels, coarse, cfg, status)


def vcycle_apply(H, r):
    """One V-cycle for ``A z = r`` from a zero initial guess."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (H.n,):
        raise DimensionError(f"vcycle_apply: residual has shape {r.shape}, expected ({H.n},)")
    return _cycle(H, 0, r)


def _cycle(H, k, b):
    lv = H.levels[k]
    if lv.P is None:
        return H.coarse_solver.solve(b)
    x = lv.smoother.presmooth(np.zeros_like(b), b)
    rc = lv.P.T @ (b - lv.A @ x)
    x = x + lv.P @ _cycle(H, k + 1, rc)
    return lv.smoother.postsmooth(x, b)


def stationary_iteration(H, A, b, x0=None, iters=10):
    """``x <- x + M^{-1}(b - A x)``; returns the iterate and residual norms."""
    A = as_csr(A)
    x = np.zeros(A.shape[0]) if x0 is None else np.array(x0, dtype=np.float64)
    norms = [float(np.linalg.norm(b - A @ x))]
    for _ in range(iters):
        x = x + vcycle_apply(H, b - A @ x)
        norms.append(float(np.linalg.norm(b - A @ x)))
    return x, norms
