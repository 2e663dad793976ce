"""Hot contraction kernels with a compiled core and a pure-numpy fallback.

The assembly and estimator loops spend almost all their time forming
weighted outer products of basis tables.  Those contractions live here in
two interchangeable implementations:

* ``dgadapt.kernels._speedups`` -- Cython extension, built at install time;
* ``dgadapt.kernels.py_ref`` -- pure numpy (einsum) fallback.

The compiled lane is selected at import when available.  Set the
environment variable ``DGADAPT_KERNELS=python`` or ``=compiled`` to force a
lane; ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

from . import py_ref

_requested = os.environ.get("DGADAPT_KERNELS", "").strip().lower()

if _requested == "python":
    _impl = py_ref
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "DGADAPT_KERNELS=compiled but the extension is not built; "
                "reinstall the package with a C compiler available"
            )
        _impl = py_ref
        BACKEND = "python"


def cell_blocks(w, p_test, p_trial):
    """``out[c, i, j] = sum_q w[c, q] * p_test[q, i] * p_trial[q, j]``.

    ``w``: (ncells, nq) float64; ``p_test``: (nq, ni); ``p_trial``: (nq, nj).
    Shared reference tables, per-cell quadrature weights.
    """
    w = np.ascontiguousarray(w, dtype=float)
    p_test = np.ascontiguousarray(p_test, dtype=float)
    p_trial = np.ascontiguousarray(p_trial, dtype=float)
    return _impl.cell_blocks(w, p_test, p_trial)


def edge_blocks(w, p_test, p_trial):
    """``out[s, i, j] = sum_q w[s, q] * p_test[s, q, i] * p_trial[s, q, j]``.

    Per-segment trace tables: ``p_test``: (nseg, nq, ni), etc.
    """
    w = np.ascontiguousarray(w, dtype=float)
    p_test = np.ascontiguousarray(p_test, dtype=float)
    p_trial = np.ascontiguousarray(p_trial, dtype=float)
    return _impl.edge_blocks(w, p_test, p_trial)


def block_diag_matvec(blocks, x):
    """Apply a block-diagonal matrix: ``y[c, :] = blocks[c] @ x[c, :]``.

    ``blocks``: (nblocks, nb, nb); ``x``: (nblocks, nb).
    """
    return _impl.block_diag_matvec(np.ascontiguousarray(blocks, dtype=float), np.ascontiguousarray(x, dtype=float))
