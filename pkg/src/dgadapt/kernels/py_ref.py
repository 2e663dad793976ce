"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np


def cell_blocks(w, p_test, p_trial):
    return np.einsum("cq,qi,qj->cij", w, p_test, p_trial, optimize=True)


def edge_blocks(w, p_test, p_trial):
    return np.einsum("sq,sqi,sqj->sij", w, p_test, p_trial, optimize=True)


def block_diag_matvec(blocks, x):
    return np.einsum("cij,cj->ci", blocks, x)
