# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels.  Must stay bit-compatible with _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, INFINITY

cnp.import_array()


def bin_points(const cnp.int64_t[::1] tx, const cnp.int64_t[::1] ty,
               const double[::1] t, const cnp.int64_t[::1] channel,
               cnp.int64_t ox, cnp.int64_t oy, Py_ssize_t n,
               double t_start, double t_end, Py_ssize_t channels):
    cdef cnp.ndarray[cnp.uint32_t, ndim=3] out = np.zeros((n, n, channels), dtype=np.uint32)
    cdef cnp.uint32_t[:, :, ::1] o = out
    cdef Py_ssize_t i, m = tx.shape[0]
    cdef cnp.int64_t r, c, k
    for i in range(m):
        if t[i] < t_start or t[i] >= t_end:
            continue
        r = ty[i] - oy
        c = tx[i] - ox
        if r < 0 or r >= n or c < 0 or c >= n:
            continue
        k = channel[i]
        if k < 0 or k >= channels:
            raise ValueError("channel index out of range")
        o[r, c, k] += 1
    return out


cdef inline void _mark(cnp.uint8_t[:, ::1] o, long ix, long iy, Py_ssize_t n) noexcept nogil:
    if 0 <= ix < n and 0 <= iy < n:
        o[iy, ix] = 1


cdef inline long labs_(long v) noexcept nogil:
    return -v if v < 0 else v


def trace_segments(const double[::1] x0, const double[::1] y0,
                   const double[::1] x1, const double[::1] y1, Py_ssize_t n):
    """Mark every cell of an n x n grid touched by each segment.

    Coordinates are in cell units relative to the grid origin.  Ties at a
    cell corner mark both side neighbours (supercover).
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((n, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    cdef Py_ssize_t s, m = x0.shape[0]
    cdef long ix, iy, ex, ey, stepx, stepy, guard, limit
    cdef double dx, dy, tmx, tmy, tdx, tdy
    for s in range(m):
        ix = <long>floor(x0[s])
        iy = <long>floor(y0[s])
        ex = <long>floor(x1[s])
        ey = <long>floor(y1[s])
        dx = x1[s] - x0[s]
        dy = y1[s] - y0[s]
        if dx > 0:
            stepx = 1
            tdx = 1.0 / dx
            tmx = (ix + 1 - x0[s]) / dx
        elif dx < 0:
            stepx = -1
            tdx = -1.0 / dx
            tmx = (x0[s] - ix) / -dx
        else:
            stepx = 0
            tdx = INFINITY
            tmx = INFINITY
        if dy > 0:
            stepy = 1
            tdy = 1.0 / dy
            tmy = (iy + 1 - y0[s]) / dy
        elif dy < 0:
            stepy = -1
            tdy = -1.0 / dy
            tmy = (y0[s] - iy) / -dy
        else:
            stepy = 0
            tdy = INFINITY
            tmy = INFINITY
        _mark(o, ix, iy, n)
        limit = labs_(ex - ix) + labs_(ey - iy) + 2
        guard = 0
        while (ix != ex or iy != ey) and guard < limit:
            guard += 1
            if tmx > 1.0 and tmy > 1.0:
                break
            if tmx < tmy:
                ix += stepx
                tmx += tdx
            elif tmy < tmx:
                iy += stepy
                tmy += tdy
            else:
                _mark(o, ix + stepx, iy, n)
                _mark(o, ix, iy + stepy, n)
                ix += stepx
                iy += stepy
                tmx += tdx
                tmy += tdy
            _mark(o, ix, iy, n)
    return out
