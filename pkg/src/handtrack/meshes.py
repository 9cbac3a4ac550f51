"""Procedural mesh primitives (icosphere, box, capsule, plane grid)."""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        new_faces = []
        vlist = list(verts)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                m = vlist[a] + vlist[b]
                m /= np.linalg.norm(m)
                edge_mid[key] = len(vlist)
                vlist.append(m)
            return edge_mid[key]

        for f in faces:
            a, b, c = int(f[0]), int(f[1]), int(f[2])
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)
    verts = verts * radius + np.asarray(center, dtype=float)
    return TriangleMesh(verts, faces)


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = (s / 2.0 for s in size)
    c = np.asarray(center, dtype=float)
    verts = np.array(
        [
            [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
            [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
        ]
    ) + c
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [3, 7, 6], [3, 6, 2],  # +y
            [0, 4, 7], [0, 7, 3],  # -x
            [1, 2, 6], [1, 6, 5],  # +x
        ],
        dtype=np.int64,
    )
    return TriangleMesh(verts, faces)


def capsule(radius: float, length: float, rings: int = 5, segments: int = 10) -> TriangleMesh:
    """Capsule along +y from y=0 to y=length (cap apices at -r and length+r).

    Poles are single vertices (no degenerate rings), so the surface is free
    of coincident duplicates.
    """
    verts = [[0.0, -radius, 0.0]]
    ring_starts = []
    # bottom cap rings (excluding the pole), ending at the lower equator
    for i in range(1, rings + 1):
        phi = -np.pi / 2 + (np.pi / 2) * i / rings
        y = radius * np.sin(phi)
        rr = radius * np.cos(phi)
        ring_starts.append(len(verts))
        for s in range(segments):
            a = 2 * np.pi * s / segments
            verts.append([rr * np.cos(a), y, rr * np.sin(a)])
    # top cap rings from the upper equator (excluding the pole)
    for i in range(rings):
        phi = (np.pi / 2) * i / rings
        y = length + radius * np.sin(phi)
        rr = radius * np.cos(phi)
        ring_starts.append(len(verts))
        for s in range(segments):
            a = 2 * np.pi * s / segments
            verts.append([rr * np.cos(a), y, rr * np.sin(a)])
    top_pole = len(verts)
    verts.append([0.0, length + radius, 0.0])

    faces = []
    first = ring_starts[0]
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append([0, first + s, first + s2])
    for r0, r1 in zip(ring_starts, ring_starts[1:]):
        for s in range(segments):
            s2 = (s + 1) % segments
            faces.append([r0 + s, r1 + s, r0 + s2])
            faces.append([r0 + s2, r1 + s, r1 + s2])
    last = ring_starts[-1]
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append([last + s, top_pole, last + s2])
    return TriangleMesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64))


def plane_grid(width: float, height: float, z: float, nx: int = 10, ny: int = 10) -> TriangleMesh:
    """Fronto-parallel tessellated rectangle at constant depth z, centered on
    the optical axis."""
    xs = np.linspace(-width / 2, width / 2, nx)
    ys = np.linspace(-height / 2, height / 2, ny)
    gx, gy = np.meshgrid(xs, ys)
    verts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))], axis=1)
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            faces.append([a, a + 1, a + nx])
            faces.append([a + 1, a + nx + 1, a + nx])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))
