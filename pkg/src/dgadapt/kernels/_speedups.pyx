# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot contraction kernels."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def cell_blocks(double[:, ::1] w, double[:, ::1] p_test, double[:, ::1] p_trial):
    cdef Py_ssize_t nc = w.shape[0]
    cdef Py_ssize_t nq = w.shape[1]
    cdef Py_ssize_t ni = p_test.shape[1]
    cdef Py_ssize_t nj = p_trial.shape[1]
    out_arr = np.zeros((nc, ni, nj))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, q, i, j
    cdef double wq, wqi
    for c in range(nc):
        for q in range(nq):
            wq = w[c, q]
            if wq == 0.0:
                continue
            for i in range(ni):
                wqi = wq * p_test[q, i]
                for j in range(nj):
                    out[c, i, j] += wqi * p_trial[q, j]
    return out_arr


def edge_blocks(double[:, ::1] w, double[:, :, ::1] p_test,
                double[:, :, ::1] p_trial):
    cdef Py_ssize_t ns = w.shape[0]
    cdef Py_ssize_t nq = w.shape[1]
    cdef Py_ssize_t ni = p_test.shape[2]
    cdef Py_ssize_t nj = p_trial.shape[2]
    out_arr = np.zeros((ns, ni, nj))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t s, q, i, j
    cdef double wq, wqi
    for s in range(ns):
        for q in range(nq):
            wq = w[s, q]
            if wq == 0.0:
                continue
            for i in range(ni):
                wqi = wq * p_test[s, q, i]
                for j in range(nj):
                    out[s, i, j] += wqi * p_trial[s, q, j]
    return out_arr


def block_diag_matvec(double[:, :, ::1] blocks, double[:, ::1] x):
    cdef Py_ssize_t nc = blocks.shape[0]
    cdef Py_ssize_t nb = blocks.shape[1]
    out_arr = np.zeros((nc, nb))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t c, i, j
    cdef double acc
    for c in range(nc):
        for i in range(nb):
            acc = 0.0
            for j in range(nb):
                acc += blocks[c, i, j] * x[c, j]
            out[c, i] = acc
    return out_arr
