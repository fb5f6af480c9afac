"""Built-in test problems for desk-scale experiments."""

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr

__all__ = ["poisson1d", "poisson2d", "anisotropic2d", "graded_poisson2d",
           "hilbert_like", "PROBLEMS", "make_problem"]


def _finish(M):
    # Kronecker products of banded factors can store explicit zeros
    A = as_csr(M, copy=True)
    A.eliminate_zeros()
    return A


def poisson1d(n):
    """Tridiagonal ``(-1, 2, -1)`` with Dirichlet ends."""
    e = np.ones(n)
    return _finish(sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1]))


def poisson2d(nx, ny=None):
    """5-point Laplacian on an ``nx x ny`` interior grid, natural ordering."""
    ny = nx if ny is None else ny
    Tx = poisson1d(nx)
    Ty = poisson1d(ny)
    return _finish(sp.kron(sp.eye(ny), Tx) + sp.kron(Ty, sp.eye(nx)))


def anisotropic2d(nx, eps=0.01, ny=None):
    """``-eps u_xx - u_yy`` with the 5-point stencil."""
    ny = nx if ny is None else ny
    Tx = poisson1d(nx)
    Ty = poisson1d(ny)
    return _finish(eps * sp.kron(sp.eye(ny), Tx) + sp.kron(Ty, sp.eye(nx)))


def _graded_nodes(n, ratio):
    # n interior cells widths growing geometrically from one wall
    if ratio == 1.0:
        h = np.ones(n + 1)
    else:
        h = ratio ** np.arange(n + 1)
    x = np.concatenate(([0.0], np.cumsum(h)))
    return x / x[-1]


def graded_poisson2d(nx, ratio=1.2, ny=None):
    """Finite-volume Laplacian on a tensor mesh graded geometrically in x and y.

    Node spacing grows by ``ratio`` per cell, which drives the condition
    number up quickly; the matrix stays symmetric positive definite.
    """
    ny = nx if ny is None else ny

    def one_d(n):
        x = _graded_nodes(n, ratio)
        h = np.diff(x)                       # n + 1 spacings
        cell = 0.5 * (h[:-1] + h[1:])        # control-volume widths
        off = -1.0 / h[1:-1]
        main = 1.0 / h[:-1] + 1.0 / h[1:]
        return sp.diags([off, main, off], [-1, 0, 1]), sp.diags(cell)

    Kx, Mx = one_d(nx)
    Ky, My = one_d(ny)
    return _finish(sp.kron(My, Kx) + sp.kron(Ky, Mx))


def hilbert_like(n, shift=1e-8):
    """Dense ``H + shift I`` with ``H_ij = 1/(i + j + 1)``, stored as CSR.

    The shift caps the condition number near ``1.9 / shift``.
    """
    i = np.arange(n)
    H = 1.0 / (i[:, None] + i[None, :] + 1.0)
    return as_csr(H + shift * np.eye(n))


PROBLEMS = {
    "poisson2d": lambda size, **kw: poisson2d(size),
    "aniso2d": lambda size, eps=0.01, **kw: anisotropic2d(size, eps=eps),
    "graded2d": lambda size, ratio=1.2, **kw: graded_poisson2d(size, ratio=ratio),
    "hilbert": lambda size, shift=1e-8, **kw: hilbert_like(size, shift=shift),
}


def make_problem(name, size, **params):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(size, **params)
