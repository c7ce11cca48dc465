"""Closed genus-0 mesh primitives."""

from __future__ import annotations

import numpy as np

from motionfield.errors import ContractError
from motionfield.geometry.mesh import IndexArray, Mesh

_GOLDEN = (1.0 + 5.0**0.5) / 2.0
_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]  # fmt: skip


def capped_cylinder(
    radius: float = 0.3,
    z_min: float = -1.0,
    z_max: float = 1.0,
    n_around: int = 32,
    n_rings: int = 64,
) -> Mesh:
    """Cylinder about the z axis closed by two fan caps, outward-oriented.

    Vertex n_around * r + j sits on ring r at angle 2*pi*j/n_around; the two cap
    centers come last (bottom, then top).
    """
    if n_around < 3 or n_rings < 2 or not radius > 0.0 or not z_max > z_min:
        raise ContractError("cylinder needs >= 3 segments, >= 2 rings, positive size")
    theta = 2.0 * np.pi * np.arange(n_around) / n_around
    z = np.linspace(z_min, z_max, n_rings)
    ring = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    side = np.concatenate([np.hstack([ring, np.full((n_around, 1), zr)]) for zr in z])
    vertices = np.vstack([side, [0.0, 0.0, z_min], [0.0, 0.0, z_max]])
    bottom, top = n_rings * n_around, n_rings * n_around + 1

    j = np.arange(n_around)
    jn = (j + 1) % n_around
    faces: list[IndexArray] = []
    for r in range(n_rings - 1):
        a, b = r * n_around + j, r * n_around + jn
        c, d = (r + 1) * n_around + jn, (r + 1) * n_around + j
        faces.append(np.stack([a, b, c], axis=1))
        faces.append(np.stack([a, c, d], axis=1))
    last = (n_rings - 1) * n_around
    faces.append(np.stack([np.full(n_around, bottom), jn, j], axis=1))
    faces.append(np.stack([np.full(n_around, top), last + j, last + jn], axis=1))
    return Mesh(vertices, np.concatenate(faces).astype(np.int64))


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Sphere from a recursively subdivided icosahedron."""
    if subdivisions < 0 or not radius > 0.0:
        raise ContractError("icosphere needs subdivisions >= 0 and a positive radius")
    t = _GOLDEN
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]  # fmt: skip
    points = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = list(_ICOSAHEDRON_FACES)
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def middle(i: int, k: int) -> int:
            key = (min(i, k), max(i, k))
            if key not in midpoint:
                m = points[i] + points[k]
                points.append(m / np.linalg.norm(m))
                midpoint[key] = len(points) - 1
            return midpoint[key]

        refined: list[tuple[int, int, int]] = []
        for a, b, c in faces:
            ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    vertices = np.array(points) * radius
    f = np.array(faces, dtype=np.int64)
    # orient every face away from the center
    tri = vertices[f]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    inward = np.einsum("ij,ij->i", normal, tri.mean(axis=1)) < 0.0
    f[inward] = f[inward][:, [0, 2, 1]]
    return Mesh(vertices, f)
