# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scan kernels for the raster and reverse-raster grid DAGs.

Loop bodies mirror ``_kernels_py`` element for element (same multiply/add
order, compiled with -ffp-contract=off), so results are bit-identical to
the pure-Python backend.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def forward_scan_raster(double[:, :, ::1] values, double[:, :, ::1] weights,
                        long[::1] dys, long[::1] dxs, bint reverse,
                        double[:, :, ::1] out):
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    cdef Py_ssize_t ns = values.shape[2]
    cdef Py_ssize_t nk = dys.shape[0]
    cdef Py_ssize_t i, j, y, x, k, s, qy, qx
    cdef double w0, wk

    for i in range(h):
        y = h - 1 - i if reverse else i
        for j in range(w):
            x = w - 1 - j if reverse else j
            w0 = weights[y, x, 0]
            for s in range(ns):
                out[y, x, s] = w0 * values[y, x, s]
            for k in range(nk):
                qy = y + dys[k]
                qx = x + dxs[k]
                if 0 <= qy < h and 0 <= qx < w:
                    wk = weights[y, x, 1 + k]
                    for s in range(ns):
                        out[y, x, s] = out[y, x, s] + wk * out[qy, qx, s]


def backward_scan_raster(double[:, :, ::1] upstream, double[:, :, ::1] weights,
                         double[:, :, ::1] values, double[:, :, ::1] agg,
                         long[::1] dys, long[::1] dxs, bint reverse,
                         double[:, :, ::1] grad_values,
                         double[:, :, ::1] grad_weights,
                         double[:, :, ::1] gb):
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    cdef Py_ssize_t ns = values.shape[2]
    cdef Py_ssize_t nk = dys.shape[0]
    cdef Py_ssize_t i, j, y, x, k, s, qy, qx, sy, sx
    cdef double wk, acc

    for i in range(h):
        y = i if reverse else h - 1 - i
        for j in range(w):
            x = j if reverse else w - 1 - j
            for s in range(ns):
                gb[y, x, s] = upstream[y, x, s]
            for k in range(nk):
                sy = y - dys[k]
                sx = x - dxs[k]
                if 0 <= sy < h and 0 <= sx < w:
                    wk = weights[sy, sx, 1 + k]
                    for s in range(ns):
                        gb[y, x, s] = gb[y, x, s] + wk * gb[sy, sx, s]
            wk = weights[y, x, 0]
            for s in range(ns):
                grad_values[y, x, s] = gb[y, x, s] * wk
            acc = 0.0
            for s in range(ns):
                acc += gb[y, x, s] * values[y, x, s]
            grad_weights[y, x, 0] = acc
            for k in range(nk):
                qy = y + dys[k]
                qx = x + dxs[k]
                if 0 <= qy < h and 0 <= qx < w:
                    acc = 0.0
                    for s in range(ns):
                        acc += gb[y, x, s] * agg[qy, qx, s]
                    grad_weights[y, x, 1 + k] = acc
