# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edge-width scan for the blur metric.

For each edge pixel, walks the intensity profile along the dominant
gradient axis to the nearest local extrema on both sides. Width is the
pixel distance between the extrema (at least 1); local contrast is their
intensity difference. Must stay in exact lockstep with the pure-Python
twin in ``_edgewidth_py``.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def measure_edges(
    cnp.float64_t[:, :] g,
    cnp.float64_t[:, :] gx,
    cnp.float64_t[:, :] gy,
    cnp.int64_t[:] rows,
    cnp.int64_t[:] cols,
):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t h = g.shape[0]
    cdef Py_ssize_t w = g.shape[1]
    widths_arr = np.empty(n, dtype=np.int64)
    contrasts_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[:] widths = widths_arr
    cdef cnp.float64_t[:] contrasts = contrasts_arr

    cdef Py_ssize_t i, r, c, pos_hi, pos_lo
    cdef int horizontal, d
    cdef double ax, ay

    for i in range(n):
        r = rows[i]
        c = cols[i]
        ax = gx[r, c]
        ay = gy[r, c]
        horizontal = 1 if (ax if ax >= 0 else -ax) >= (ay if ay >= 0 else -ay) else 0
        if horizontal:
            d = 1 if ax > 0 else -1
            pos_hi = c
            while 0 <= pos_hi + d < w and g[r, pos_hi + d] > g[r, pos_hi]:
                pos_hi += d
            pos_lo = c
            while 0 <= pos_lo - d < w and g[r, pos_lo - d] < g[r, pos_lo]:
                pos_lo -= d
            widths[i] = (pos_hi - pos_lo) * d
            contrasts[i] = g[r, pos_hi] - g[r, pos_lo]
        else:
            d = 1 if ay > 0 else -1
            pos_hi = r
            while 0 <= pos_hi + d < h and g[pos_hi + d, c] > g[pos_hi, c]:
                pos_hi += d
            pos_lo = r
            while 0 <= pos_lo - d < h and g[pos_lo - d, c] < g[pos_lo, c]:
                pos_lo -= d
            widths[i] = (pos_hi - pos_lo) * d
            contrasts[i] = g[pos_hi, c] - g[pos_lo, c]
        if widths[i] < 1:
            widths[i] = 1
    return widths_arr, contrasts_arr
