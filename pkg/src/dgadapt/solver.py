"""Sparse nonsymmetric solves for the backward-Euler and stationary systems.

Restarted GMRES (scipy) with a cell-block Jacobi preconditioner.  A solve
that does not reach the requested relative residual raises
:class:`SolverError` carrying the best iterate; silent degradation is not
an option for the adaptive driver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .assembly import block_jacobi_inverse


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    maxiter: int = 5000
    restart: int = 60
    preconditioner: str = "block"  # "block" | "ilu" | "none"
    ilu_drop_tol: float = 1e-4
    ilu_fill_factor: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.restart < 1:
            raise ValueError("restart length must be >= 1")
        if self.preconditioner not in ("block", "ilu", "none"):
            raise ValueError("unknown preconditioner %r" % (self.preconditioner,))


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float


class SolverError(Exception):
    """Non-convergence; carries the best iterate and its residual."""

    def __init__(self, message, best_x, residual):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual


def _block_preconditioner(mat, block_size):
    inv = block_jacobi_inverse(mat, block_size)
    nblocks = mat.shape[0] // block_size

    def apply(x):
        return kernels.block_diag_matvec(inv, x.reshape(nblocks, block_size)).ravel()

    return spla.LinearOperator(mat.shape, matvec=apply)


# Incomplete-LU factors are expensive (minutes at ~2e5 unknowns) and large
# (comparable to the matrix).  Two slots cover the adaptive driver's
# trial-step pattern, which alternates between a step size and its double.
_ILU_SLOTS = 2
_ilu_cache: dict = {}


def clear_preconditioner_cache():
    _ilu_cache.clear()


def _ilu_preconditioner(mat, config, cache_key):
    if cache_key is not None and cache_key in _ilu_cache:
        ilu = _ilu_cache.pop(cache_key)
        _ilu_cache[cache_key] = ilu  # refresh LRU order
    else:
        # evict down to one retained factor *before* factoring so the new
        # factor's workspace does not coexist with a full cache
        while len(_ilu_cache) >= _ILU_SLOTS:
            _ilu_cache.pop(next(iter(_ilu_cache)))
        ilu = spla.spilu(
            mat.tocsc(),
            drop_tol=config.ilu_drop_tol,
            fill_factor=config.ilu_fill_factor,
        )
        if cache_key is not None:
            _ilu_cache[cache_key] = ilu
    return spla.LinearOperator(mat.shape, matvec=ilu.solve)


def solve_nonsymmetric(
    mat: sp.spmatrix,
    rhs: np.ndarray,
    config: SolverConfig = SolverConfig(),
    block_size: int | None = None,
    precond_key=None,
):
    """Solve ``mat @ x = rhs`` to ``||rhs - mat x|| <= rtol ||rhs||``.

    ``block_size`` enables the cell-block Jacobi preconditioner (ignored
    when the config selects "none").  With the "ilu" preconditioner a
    hashable ``precond_key`` identifying the matrix lets repeated solves
    reuse the incomplete factorization.  Returns ``(x, SolveStats)``.
    """
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), SolveStats(0, 0.0)
    precond = None
    if config.preconditioner == "block" and block_size:
        mat = mat.tocsr()
        precond = _block_preconditioner(mat, block_size)
    elif config.preconditioner == "ilu":
        precond = _ilu_preconditioner(mat, config, precond_key)

    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x = None
    for attempt_rtol in (config.rtol, 0.01 * config.rtol):
        x, _info = spla.gmres(
            mat,
            rhs,
            x0=x,
            rtol=attempt_rtol,
            restart=config.restart,
            maxiter=max(1, config.maxiter // config.restart),
            M=precond,
            callback=count,
            callback_type="pr_norm",
        )
        res = np.linalg.norm(rhs - mat @ x) / bnorm
        if res <= config.rtol:
            return x, SolveStats(iters, res)
    raise SolverError(
        "GMRES did not reach rtol=%.1e (best residual %.3e after %d iterations)"
        % (config.rtol, res, iters),
        best_x=x,
        residual=res,
    )
