"""Z-buffer triangle rasterization over a pinhole camera.

Depth is interpolated perspective-correct (1/z affine in screen space), so
fragments of a planar triangle lie exactly on its 3D plane.  Pixel centers
sit at integer coordinates; a triangle owns a pixel when the center falls
inside (inclusive edges, either winding).
"""

import numpy as np

Z_NEAR = 0.1  # mm


def _rasterize_loop(xs, ys, zs, tris, width, height, zbuf):
    for f in range(tris.shape[0]):
        i0, i1, i2 = tris[f, 0], tris[f, 1], tris[f, 2]
        z0, z1, z2 = zs[i0], zs[i1], zs[i2]
        if z0 <= Z_NEAR or z1 <= Z_NEAR or z2 <= Z_NEAR:
            continue
        x0, y0 = xs[i0], ys[i0]
        x1, y1 = xs[i1], ys[i1]
        x2, y2 = xs[i2], ys[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        xmin = int(np.ceil(min(x0, x1, x2)))
        xmax = int(np.floor(max(x0, x1, x2)))
        ymin = int(np.ceil(min(y0, y1, y2)))
        ymax = int(np.floor(max(y0, y1, y2)))
        if xmin < 0:
            xmin = 0
        if ymin < 0:
            ymin = 0
        if xmax > width - 1:
            xmax = width - 1
        if ymax > height - 1:
            ymax = height - 1
        inv0, inv1, inv2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        inv_area = 1.0 / area
        for py in range(ymin, ymax + 1):
            for px in range(xmin, xmax + 1):
                w0 = ((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) * inv_area
                w1 = ((x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 * inv0 + w1 * inv1 + w2 * inv2)
                if z < zbuf[py, px]:
                    zbuf[py, px] = z


def _rasterize_numpy(xs, ys, zs, tris, width, height, zbuf):
    for f in range(tris.shape[0]):
        i0, i1, i2 = tris[f]
        z = zs[[i0, i1, i2]]
        if np.any(z <= Z_NEAR):
            continue
        x = xs[[i0, i1, i2]]
        y = ys[[i0, i1, i2]]
        area = (x[1] - x[0]) * (y[2] - y[0]) - (y[1] - y[0]) * (x[2] - x[0])
        if area == 0.0:
            continue
        xmin = max(int(np.ceil(x.min())), 0)
        xmax = min(int(np.floor(x.max())), width - 1)
        ymin = max(int(np.ceil(y.min())), 0)
        ymax = min(int(np.floor(y.max())), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px, py = np.meshgrid(np.arange(xmin, xmax + 1), np.arange(ymin, ymax + 1))
        w0 = ((x[2] - x[1]) * (py - y[1]) - (y[2] - y[1]) * (px - x[1])) / area
        w1 = ((x[0] - x[2]) * (py - y[2]) - (y[0] - y[2]) * (px - x[2])) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        depth = 1.0 / (w0 / z[0] + w1 / z[1] + w2 / z[2])
        tile = zbuf[ymin : ymax + 1, xmin : xmax + 1]
        np.minimum(tile, np.where(inside, depth, np.inf), out=tile)


from . import USE_NUMBA  # noqa: E402

if USE_NUMBA:
    from numba import njit

    _rasterize = njit(cache=True)(_rasterize_loop)
else:
    _rasterize = _rasterize_numpy


def rasterize_depth(vertices, triangles, fx, fy, cx, cy, width, height):
    """Render camera-frame vertices into a z-buffer.

    Returns the (height, width) depth image with np.inf where nothing was
    drawn.  Vertices behind the near plane drop their triangles.
    """
    v = np.ascontiguousarray(vertices, dtype=np.float64)
    tris = np.ascontiguousarray(triangles, dtype=np.int64)
    z = v[:, 2].copy()
    safe = np.where(np.abs(z) < 1e-12, 1e-12, z)
    xs = fx * v[:, 0] / safe + cx
    ys = fy * v[:, 1] / safe + cy
    zbuf = np.full((height, width), np.inf)
    if tris.size:
        _rasterize(xs, ys, z, tris, width, height, zbuf)
    return zbuf
