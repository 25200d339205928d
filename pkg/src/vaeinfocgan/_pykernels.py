"""Pure-Python raster kernels; reference semantics for _ckernels."""

import math

import numpy as np


def bin_points(tx, ty, t, channel, ox, oy, n, t_start, t_end, channels):
    tx = np.asarray(tx, dtype=np.int64)
    ty = np.asarray(ty, dtype=np.int64)
    t = np.asarray(t, dtype=np.float64)
    channel = np.asarray(channel, dtype=np.int64)
    r = ty - oy
    c = tx - ox
    keep = (t >= t_start) & (t < t_end) & (r >= 0) & (r < n) & (c >= 0) & (c < n)
    k = channel[keep]
    if np.any((k < 0) | (k >= channels)):
        raise ValueError("channel index out of range")
    flat = (r[keep] * n + c[keep]) * channels + k
    counts = np.bincount(flat, minlength=n * n * channels)
    return counts.astype(np.uint32).reshape(n, n, channels)


def trace_segments(x0, y0, x1, y1, n):
    out = np.zeros((n, n), dtype=np.uint8)

    def mark(ix, iy):
        if 0 <= ix < n and 0 <= iy < n:
            out[iy, ix] = 1

    for sx, sy, fx, fy in zip(np.asarray(x0, float).tolist(), np.asarray(y0, float).tolist(),
                              np.asarray(x1, float).tolist(), np.asarray(y1, float).tolist()):
        ix, iy = math.floor(sx), math.floor(sy)
        ex, ey = math.floor(fx), math.floor(fy)
        dx, dy = fx - sx, fy - sy
        if dx > 0:
            stepx, tdx, tmx = 1, 1.0 / dx, (ix + 1 - sx) / dx
        elif dx < 0:
            stepx, tdx, tmx = -1, -1.0 / dx, (sx - ix) / -dx
        else:
            stepx, tdx, tmx = 0, math.inf, math.inf
        if dy > 0:
            stepy, tdy, tmy = 1, 1.0 / dy, (iy + 1 - sy) / dy
        elif dy < 0:
            stepy, tdy, tmy = -1, -1.0 / dy, (sy - iy) / -dy
        else:
            stepy, tdy, tmy = 0, math.inf, math.inf
        mark(ix, iy)
        limit = abs(ex - ix) + abs(ey - iy) + 2
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
                mark(ix + stepx, iy)
                mark(ix, iy + stepy)
                ix += stepx
                iy += stepy
                tmx += tdx
                tmy += tdy
            mark(ix, iy)
    return out
