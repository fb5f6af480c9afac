"""Stationary relaxation used inside the AMG cycle.

The module-level ``*_sweep`` functions take the matrix directly and are the
reference form of each method.  :class:`Smoother` binds a configuration to a
level matrix, precomputes splittings and factorizations once, and is what the
multigrid cycle calls.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ZeroPivotError
from .factor import ilu0, ilut, to_ldu
from .scaling import ruiz_scale
from .sparse import as_csr, diagonal, split_dlu
from .trisolve import (TriangularOperator, direct_solve, jacobi_solve,
                       neumann_apply)

__all__ = ["SmootherConfig", "Smoother", "SMOOTHER_KINDS", "jacobi_sweep",
           "l1_jacobi_sweep", "gs_sweep", "hybrid_gs_sweep", "poly_gs_sweep",
           "ilu_smooth", "partition_labels", "contiguous_partition"]

SMOOTHER_KINDS = ("jacobi", "l1_jacobi", "gs_forward", "gs_backward", "gs_symmetric",
                  "hybrid_gs", "poly_gs", "ilu_direct", "ilu_jacobi")


@dataclass(frozen=True)
class SmootherConfig:
    """Relaxation settings.

    ``degree`` is the inner Neumann degree of polynomial Gauss-Seidel;
    ``m_L``/``m_U`` are the Jacobi sweep counts of the ILU triangular solves.
    ``num_blocks`` builds a contiguous partition for ``hybrid_gs`` when no
    explicit ``block_partition`` is given.  With ``reverse_post`` the
    post-smoother of a directional Gauss-Seidel runs in the opposite
    direction, which keeps the V-cycle symmetric.
    """

    kind: str = "hybrid_gs"
    sweeps: int = 1
    degree: int = 2
    m_L: int = 3
    m_U: int = 3
    block_partition: Optional[Sequence] = None
    num_blocks: int = 4
    local_sweeps: int = 1
    omega: float = 1.0
    ilu: str = "ilu0"
    droptol: float = 1e-2
    lfil: int = 5
    scaling: str = "ldu"
    reverse_post: bool = True

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother kind {self.kind!r}")
        if self.sweeps < 1:
            raise ValueError("sweeps must be at least 1")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if self.kind == "ilu_jacobi" and (self.m_L < 1 or self.m_U < 1):
            raise ValueError("ilu_jacobi needs m_L, m_U >= 1")
        if self.ilu not in ("ilu0", "ilut"):
            raise ValueError(f"unknown ILU variant {self.ilu!r}")
        if self.scaling not in ("ldu", "ruiz", "none"):
            raise ValueError(f"unknown scaling {self.scaling!r}")


def _residual(A, x, b):
    return b - A @ x


def _nonzero_diag(A):
    d = diagonal(A)
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ZeroPivotError(f"zero diagonal entry in row {zero[0]}", row=int(zero[0]))
    return d


def jacobi_sweep(A, x, b, omega=1.0):
    """``x + omega D^{-1} (b - A x)``."""
    d = _nonzero_diag(A)
    return x + omega * _residual(A, x, b) / d


def l1_diagonal(A):
    A = as_csr(A)
    d = diagonal(A)
    off = as_csr(abs(A - sp.diags(d)))
    dl1 = d + np.asarray(off.sum(axis=1)).ravel()
    zero = np.flatnonzero(dl1 == 0.0)
    if zero.size:
        raise ZeroPivotError(f"l1-Jacobi: zero l1 diagonal in row {zero[0]}", row=int(zero[0]))
    return dl1


def l1_jacobi_sweep(A, x, b):
    """Jacobi with ``d_i = a_ii + sum_{j != i} |a_ij|``."""
    return x + _residual(A, x, b) / l1_diagonal(A)


def gs_sweep(A, x, b, direction="forward"):
    """One Gauss-Seidel sweep ``x + M^{-1} r``.

    ``M = D + L`` forward, ``M = D + U`` backward; ``symmetric`` does a forward
    sweep followed by a backward one.
    """
    A = as_csr(A)
    _nonzero_diag(A)
    if direction == "symmetric":
        return gs_sweep(A, gs_sweep(A, x, b, "forward"), b, "backward")
    shape = {"forward": "lower", "backward": "upper"}.get(direction)
    if shape is None:
        raise ValueError(f"unknown direction {direction!r}")
    M = TriangularOperator.from_matrix(A, shape)
    return x + direct_solve(M, _residual(A, x, b))


def contiguous_partition(n, num_blocks):
    """Labels for ``num_blocks`` nearly equal contiguous blocks."""
    num_blocks = max(1, min(int(num_blocks), n)) if n else 1
    return np.minimum((np.arange(n) * num_blocks) // max(n, 1), num_blocks - 1)


def partition_labels(partition, n):
    """Block label per point from a sequence of disjoint index sets."""
    labels = np.full(n, -1, dtype=np.int64)
    for k, block in enumerate(partition):
        block = np.asarray(block, dtype=np.int64).reshape(-1)
        if block.size and (block.min() < 0 or block.max() >= n):
            raise ValueError("block partition index out of range")
        if np.any(labels[block] != -1) or np.unique(block).size != block.size:
            raise ValueError("block partition is not disjoint")
        labels[block] = k
    if np.any(labels < 0):
        raise ValueError("block partition does not cover every point")
    return labels


def _block_diagonal_part(A, labels):
    C = A.tocoo()
    keep = labels[C.row] == labels[C.col]
    return as_csr(sp.coo_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=A.shape))


class _HybridGS:
    """Gauss-Seidel inside blocks, Jacobi coupling between blocks."""

    def __init__(self, A, labels, local_sweeps=1):
        self.A = A
        self.local_sweeps = local_sweeps
        _nonzero_diag(A)
        self.Abd = _block_diagonal_part(A, labels)
        self.M = {"forward": TriangularOperator.from_matrix(self.Abd, "lower"),
                  "backward": TriangularOperator.from_matrix(self.Abd, "upper")}

    def sweep(self, x, b, direction="forward"):
        if direction == "symmetric":
            return self.sweep(self.sweep(x, b, "forward"), b, "backward")
        M = self.M[direction]
        # off-block coupling is frozen at the incoming iterate
        rhs = b - self.A @ x + self.Abd @ x
        x = x + direct_solve(M, rhs - self.Abd @ x)
        for _ in range(self.local_sweeps - 1):
            x = x + direct_solve(M, rhs - self.Abd @ x)
        return x


def hybrid_gs_sweep(A, x, b, partition, local_sweeps=1, direction="forward"):
    """Block-hybrid Gauss-Seidel.

    Each block of ``partition`` runs ``local_sweeps`` local Gauss-Seidel
    sweeps; couplings to other blocks use the iterate from before the sweep.
    """
    A = as_csr(A)
    if A.shape[0] != len(x):
        raise DimensionError("hybrid_gs_sweep: dimension mismatch")
    labels = partition_labels(partition, A.shape[0])
    return _HybridGS(A, labels, local_sweeps).sweep(np.asarray(x, float), b, direction)


def poly_gs_sweep(A, x, b, p):
    """Polynomial Gauss-Seidel with ``p`` inner Jacobi steps.

    Starts the inner iteration from the diagonally scaled residual
    ``g = D^{-1} r`` and repeats ``g <- D^{-1} (r - L g)``, so the update is
    ``sum_{j=0}^{p} (-D^{-1} L)^j D^{-1} r``.  ``p = 0`` is a Jacobi sweep.
    """
    A = as_csr(A)
    d, L, _ = split_dlu(A)
    if np.any(d == 0.0):
        _nonzero_diag(A)
    return _poly_gs(A, d, L, x, b, p)


def _poly_gs(A, d, L, x, b, p):
    r = _residual(A, x, b)
    g = r / d
    for _ in range(p):
        g = (r - L @ g) / d
    return x + g


class _IluApply:
    """Precomputed pieces for ILU smoothing with direct or Jacobi solves."""

    def __init__(self, F, cfg):
        self.F = F
        self.cfg = cfg
        self.iterative = cfg.kind == "ilu_jacobi"
        if self.iterative and cfg.scaling == "ldu":
            self.F = to_ldu(F)
        elif self.iterative and cfg.scaling == "ruiz":
            Ut, self.scaling = ruiz_scale(F.U.matrix)
            self.U_scaled = TriangularOperator(Ut, "upper")

    def correction(self, r):
        """Approximate ``(L U)^{-1} r``."""
        F, cfg = self.F, self.cfg
        if not self.iterative:
            return direct_solve(F.U, direct_solve(F.L, r))
        y = jacobi_solve(F.L, r, cfg.m_L, source="L factor")
        if cfg.scaling == "ldu":
            v = neumann_apply(F.Us, y / F.d, cfg.m_U - 1)
            if not np.all(np.isfinite(v)):
                jacobi_solve(TriangularOperator(F.Us, "upper", True), y / F.d,
                             cfg.m_U, source="U factor")
            return v
        if cfg.scaling == "ruiz":
            s = self.scaling
            v = jacobi_solve(self.U_scaled, s.d_row * y, cfg.m_U, source="U factor (Ruiz)")
            return s.d_col * v
        return jacobi_solve(F.U, y, cfg.m_U, source="U factor")


def ilu_smooth(A, F, x, b, cfg):
    """``x + v`` with ``v ~ (L U)^{-1} (b - A x)``.

    ``ilu_direct`` uses exact substitution.  ``ilu_jacobi`` runs ``m_L`` Jacobi
    sweeps on ``L`` from zero, then ``m_U`` sweeps on the scaled upper factor
    (``ldu``: ``I + U_s`` after factoring out the diagonal; ``ruiz``:
    ``D_r U D_c``) and unscales the result.
    """
    if cfg.kind not in ("ilu_direct", "ilu_jacobi"):
        raise ValueError(f"ilu_smooth needs an ILU smoother kind, got {cfg.kind!r}")
    return x + _IluApply(F, cfg).correction(_residual(as_csr(A), x, b))


_REVERSED = {"forward": "backward", "backward": "forward", "symmetric": "symmetric"}


class Smoother:
    """A configured smoother bound to one level matrix."""

    def __init__(self, A, cfg):
        self.A = A = as_csr(A)
        self.cfg = cfg
        n = A.shape[0]
        kind = cfg.kind
        if kind in ("jacobi", "poly_gs", "gs_forward", "gs_backward", "gs_symmetric", "hybrid_gs"):
            self.d = _nonzero_diag(A)
        if kind == "l1_jacobi":
            self.d = l1_diagonal(A)
        if kind == "poly_gs":
            self.L = split_dlu(A)[1]
        if kind.startswith("gs_") or kind == "hybrid_gs":
            if kind == "hybrid_gs":
                if cfg.block_partition is not None:
                    labels = partition_labels(cfg.block_partition, n)
                else:
                    labels = contiguous_partition(n, cfg.num_blocks)
            else:
                labels = np.zeros(n, dtype=np.int64)
            local = cfg.local_sweeps if kind == "hybrid_gs" else 1
            self._gs = _HybridGS(A, labels, local)
            self.direction = {"gs_forward": "forward", "gs_backward": "backward",
                              "gs_symmetric": "symmetric", "hybrid_gs": "forward"}[kind]
        if kind in ("ilu_direct", "ilu_jacobi"):
            F = ilu0(A) if cfg.ilu == "ilu0" else ilut(A, cfg.droptol, cfg.lfil)
            self.factorization = F
            self._ilu = _IluApply(F, cfg)

    def _sweep(self, x, b, post):
        cfg, A = self.cfg, self.A
        kind = cfg.kind
        if kind in ("jacobi", "l1_jacobi"):
            omega = cfg.omega if kind == "jacobi" else 1.0
            return x + omega * (b - A @ x) / self.d
        if kind == "poly_gs":
            return _poly_gs(A, self.d, self.L, x, b, cfg.degree)
        if kind.startswith("gs_") or kind == "hybrid_gs":
            direction = self.direction
            if post and cfg.reverse_post:
                direction = _REVERSED[direction]
            return self._gs.sweep(x, b, direction)
        return x + self._ilu.correction(b - A @ x)

    def presmooth(self, x, b):
        for _ in range(self.cfg.sweeps):
            x = self._sweep(x, b, post=False)
        return x

    def postsmooth(self, x, b):
        for _ in range(self.cfg.sweeps):
            x = self._sweep(x, b, post=True)
        return x
