"""Windowed bilateral filter on a depth image (0 marks invalid pixels)."""

import numpy as np


def _bilateral_loop(depth, radius, inv2_ss, inv2_rs, out):
    height, width = depth.shape
    for py in range(height):
        for px in range(width):
            center = depth[py, px]
            if center <= 0.0:
                continue
            acc = 0.0
            wsum = 0.0
            for dy in range(-radius, radius + 1):
                ny = py + dy
                if ny < 0 or ny >= height:
                    continue
                for dx in range(-radius, radius + 1):
                    nx = px + dx
                    if nx < 0 or nx >= width:
                        continue
                    d = depth[ny, nx]
                    if d <= 0.0:
                        continue
                    dd = d - center
                    w = np.exp(-(dx * dx + dy * dy) * inv2_ss - dd * dd * inv2_rs)
                    acc += w * d
                    wsum += w
            out[py, px] = acc / wsum


def _bilateral_numpy(depth, radius, inv2_ss, inv2_rs, out):
    height, width = depth.shape
    valid = depth > 0.0
    acc = np.zeros_like(depth)
    wsum = np.zeros_like(depth)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ys0, ys1 = max(0, -dy), min(height, height - dy)
            xs0, xs1 = max(0, -dx), min(width, width - dx)
            sh = np.zeros_like(depth)
            shv = np.zeros_like(valid)
            sh[ys0:ys1, xs0:xs1] = depth[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
            shv[ys0:ys1, xs0:xs1] = valid[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
            dd = sh - depth
            w = np.exp(-(dx * dx + dy * dy) * inv2_ss - dd * dd * inv2_rs)
            w = np.where(valid & shv, w, 0.0)
            acc += w * sh
            wsum += w
    np.divide(acc, wsum, out=out, where=wsum > 0.0)


from . import USE_NUMBA  # noqa: E402

if USE_NUMBA:
    from numba import njit

    _bilateral = njit(cache=True)(_bilateral_loop)
else:
    _bilateral = _bilateral_numpy


def bilateral_filter(depth, spatial_sigma, range_sigma):
    """Smooth valid depth pixels; window size is 2*ceil(2*spatial_sigma)+1.

    Invalid pixels stay invalid and never contribute to neighbors.
    """
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    radius = int(np.ceil(2.0 * spatial_sigma))
    out = np.zeros_like(depth)
    _bilateral(
        depth,
        radius,
        1.0 / (2.0 * spatial_sigma**2),
        1.0 / (2.0 * range_sigma**2),
        out,
    )
    return out
