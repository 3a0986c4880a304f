"""Pure-Python twin of the compiled edge-width scan (same contract)."""

import numpy as np


def measure_edges(g, gx, gy, rows, cols):
    h, w = g.shape
    n = rows.shape[0]
    widths = np.empty(n, dtype=np.int64)
    contrasts = np.empty(n, dtype=np.float64)
    for i in range(n):
        r, c = int(rows[i]), int(cols[i])
        if abs(gx[r, c]) >= abs(gy[r, c]):
            d = 1 if gx[r, c] > 0 else -1
            line = g[r]
            pos = c
        else:
            d = 1 if gy[r, c] > 0 else -1
            line = g[:, c]
            pos = r
        limit = line.shape[0]
        pos_hi = pos
        while 0 <= pos_hi + d < limit and line[pos_hi + d] > line[pos_hi]:
            pos_hi += d
        pos_lo = pos
        while 0 <= pos_lo - d < limit and line[pos_lo - d] < line[pos_lo]:
            pos_lo -= d
        widths[i] = max((pos_hi - pos_lo) * d, 1)
        contrasts[i] = line[pos_hi] - line[pos_lo]
    return widths, contrasts
