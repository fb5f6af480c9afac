"""Sparse iterative solvers built around truncated Neumann series.

One-reduce MGS-GMRES with a truncated correction matrix, classical AMG with
polynomial Gauss-Seidel and Jacobi-iterated ILU smoothers, and diagnostics for
non-normal triangular factors.
"""

from .amg import AmgConfig, AmgHierarchy, build_hierarchy, vcycle_apply
from .diagnostics import (departure, loss_of_orthogonality, s_matrix_norm, theorem1_bound,
                          theorem2_bounds, theorem3_bound, theorem4_bound)
from .errors import (DimensionError, DivergenceError, InterpolationError, MatrixMarketError,
                     SolverError, ZeroPivotError)
from .factor import IluFactorization, ilu0, ilut, to_ldu
from .gmres import GmresConfig, SolveReport, gmres_solve
from .problems import make_problem
from .scaling import Permutation, rcm_order, ruiz_scale
from .smoothers import Smoother, SmootherConfig
from .sparse import as_csr, mm_read, mm_write

__version__ = "0.1.0"

__all__ = [
    "AmgConfig", "AmgHierarchy", "build_hierarchy", "vcycle_apply",
    "departure", "loss_of_orthogonality", "s_matrix_norm", "theorem1_bound",
    "theorem2_bounds", "theorem3_bound", "theorem4_bound",
    "DimensionError", "DivergenceError", "InterpolationError", "MatrixMarketError",
    "SolverError", "ZeroPivotError",
    "IluFactorization", "ilu0", "ilut", "to_ldu",
    "GmresConfig", "SolveReport", "gmres_solve",
    "make_problem", "Permutation", "rcm_order", "ruiz_scale",
    "Smoother", "SmootherConfig", "as_csr", "mm_read", "mm_write",
]
