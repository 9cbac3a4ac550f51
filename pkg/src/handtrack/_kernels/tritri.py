"""Exact triangle-triangle overlap tests (segment-vs-triangle both ways).

Coplanar pairs count as non-intersecting; the collision stage only needs
transversal crossings and coplanar contact is measure-zero for posed meshes.
"""

import numpy as np

EPS = 1e-12


def _seg_tri_loop(px, py, pz, qx, qy, qz, ax, ay, az, bx, by, bz, cx, cy, cz):
    e1x, e1y, e1z = bx - ax, by - ay, bz - az
    e2x, e2y, e2z = cx - ax, cy - ay, cz - az
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    dx, dy, dz = qx - px, qy - py, qz - pz
    denom = nx * dx + ny * dy + nz * dz
    if abs(denom) < EPS:
        return False
    s = (nx * (ax - px) + ny * (ay - py) + nz * (az - pz)) / denom
    if s < 0.0 or s > 1.0:
        return False
    ix, iy, iz = px + s * dx, py + s * dy, pz + s * dz
    # barycentric via dot products
    vx, vy, vz = ix - ax, iy - ay, iz - az
    d11 = e1x * e1x + e1y * e1y + e1z * e1z
    d12 = e1x * e2x + e1y * e2y + e1z * e2z
    d22 = e2x * e2x + e2y * e2y + e2z * e2z
    dv1 = vx * e1x + vy * e1y + vz * e1z
    dv2 = vx * e2x + vy * e2y + vz * e2z
    det = d11 * d22 - d12 * d12
    if abs(det) < EPS:
        return False
    u = (d22 * dv1 - d12 * dv2) / det
    v = (d11 * dv2 - d12 * dv1) / det
    return u >= 0.0 and v >= 0.0 and u + v <= 1.0


def _make_batch_loop(seg_tri):
    def _batch(pa, pb, out):
        for n in range(pa.shape[0]):
            a = pa[n]
            b = pb[n]
            hit = False
            for i in range(3):
                j = (i + 1) % 3
                if seg_tri(
                    a[i, 0], a[i, 1], a[i, 2], a[j, 0], a[j, 1], a[j, 2],
                    b[0, 0], b[0, 1], b[0, 2], b[1, 0], b[1, 1], b[1, 2],
                    b[2, 0], b[2, 1], b[2, 2],
                ) or seg_tri(
                    b[i, 0], b[i, 1], b[i, 2], b[j, 0], b[j, 1], b[j, 2],
                    a[0, 0], a[0, 1], a[0, 2], a[1, 0], a[1, 1], a[1, 2],
                    a[2, 0], a[2, 1], a[2, 2],
                ):
                    hit = True
                    break
            out[n] = hit

    return _batch


def _seg_tri_numpy(p, q, a, b, c):
    e1 = b - a
    e2 = c - a
    nrm = np.cross(e1, e2)
    d = q - p
    denom = np.einsum("nc,nc->n", nrm, d)
    ok = np.abs(denom) >= EPS
    denom = np.where(ok, denom, 1.0)
    s = np.einsum("nc,nc->n", nrm, a - p) / denom
    ok &= (s >= 0.0) & (s <= 1.0)
    x = p + s[:, None] * d
    v = x - a
    d11 = np.einsum("nc,nc->n", e1, e1)
    d12 = np.einsum("nc,nc->n", e1, e2)
    d22 = np.einsum("nc,nc->n", e2, e2)
    dv1 = np.einsum("nc,nc->n", v, e1)
    dv2 = np.einsum("nc,nc->n", v, e2)
    det = d11 * d22 - d12 * d12
    ok &= np.abs(det) >= EPS
    det = np.where(det == 0.0, 1.0, det)
    u = (d22 * dv1 - d12 * dv2) / det
    w = (d11 * dv2 - d12 * dv1) / det
    return ok & (u >= 0.0) & (w >= 0.0) & (u + w <= 1.0)


def _batch_numpy(pa, pb, out):
    hit = np.zeros(pa.shape[0], dtype=bool)
    for i in range(3):
        j = (i + 1) % 3
        hit |= _seg_tri_numpy(pa[:, i], pa[:, j], pb[:, 0], pb[:, 1], pb[:, 2])
        hit |= _seg_tri_numpy(pb[:, i], pb[:, j], pa[:, 0], pa[:, 1], pa[:, 2])
    out[:] = hit


from . import USE_NUMBA  # noqa: E402

if USE_NUMBA:
    from numba import njit

    _seg_tri_jit = njit(cache=True)(_seg_tri_loop)
    _batch = njit(cache=True)(_make_batch_loop(_seg_tri_jit))
else:
    _batch = _batch_numpy


def tri_tri_intersections(tris_a, tris_b):
    """Elementwise overlap test of two (N, 3, 3) triangle arrays."""
    pa = np.ascontiguousarray(tris_a, dtype=np.float64)
    pb = np.ascontiguousarray(tris_b, dtype=np.float64)
    out = np.zeros(pa.shape[0], dtype=np.bool_)
    if pa.shape[0]:
        _batch(pa, pb, out)
    return out
