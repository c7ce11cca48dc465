"""Triangle meshes and oriented point sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from motionfield.errors import ContractError

logger = logging.getLogger(__name__)

IndexArray = NDArray[np.int64]
FloatArray = NDArray[np.float64]

NORMAL_TOL = 1e-6
FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(slots=True)
class PointSet:
    """Points with optional unit normals."""

    points: FloatArray
    normals: FloatArray | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ContractError(f"points must be N x 3, got shape {self.points.shape}")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != self.points.shape:
                raise ContractError("normals must match the points' shape")
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise ContractError("normals must have unit length")

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(eq=False)
class Mesh:
    """Triangle mesh with derived edges, face areas and vertex normals."""

    vertices: FloatArray
    faces: IndexArray
    _cache: dict[str, FloatArray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ContractError(f"vertices must be V x 3, got shape {self.vertices.shape}")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ContractError("face index out of range")

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @cached_property
    def edges(self) -> IndexArray:
        """Deduplicated undirected edges, each stored as (low, high), sorted."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0).astype(np.int64)

    def face_cross(self) -> FloatArray:
        """Unnormalized face normals; their length is twice the face area."""
        v = self.vertices
        f = self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    def face_areas(self) -> FloatArray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self) -> FloatArray:
        cross = self.face_cross()
        length = np.linalg.norm(cross, axis=1, keepdims=True)
        fallback = np.tile(FALLBACK_NORMAL, (len(cross), 1))
        return np.divide(cross, length, out=fallback, where=length > 0.0)

    def degenerate_faces(self) -> IndexArray:
        return np.flatnonzero(self.face_areas() <= 0.0).astype(np.int64)

    def with_vertices(self, vertices: ArrayLike) -> Mesh:
        """Same connectivity, new vertex positions."""
        return Mesh(np.asarray(vertices, dtype=np.float64), self.faces.copy())

    def edge_lengths(self, vertices: ArrayLike | None = None) -> FloatArray:
        v = self.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
        e = self.edges
        return np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=-1)


def vertex_normals(mesh: Mesh) -> FloatArray:
    """Area-weighted vertex normals.

    Vertices whose incident faces have no area get (0, 0, 1) and are reported
    with a warning.
    """
    cached = mesh._cache.get("vertex_normals")
    if cached is not None:
        return cached
    accum = np.zeros_like(mesh.vertices)
    cross = mesh.face_cross()
    for corner in range(3):
        np.add.at(accum, mesh.faces[:, corner], cross)
    length = np.linalg.norm(accum, axis=1, keepdims=True)
    flat = length[:, 0] <= 0.0
    if np.any(flat):
        logger.warning(
            "%d vertices have no incident area; using normal (0, 0, 1)", int(flat.sum())
        )
    safe = np.where(flat[:, None], 1.0, length)
    normals = np.where(flat[:, None], FALLBACK_NORMAL, accum / safe)
    mesh._cache["vertex_normals"] = normals
    return normals


def sample_surface(mesh: Mesh, n: int, seed: int = 0) -> PointSet:
    """Draw n points uniformly by area, with the face normal at each sample."""
    return sample_surface_indexed(mesh, n, seed)[0]


def sample_surface_indexed(mesh: Mesh, n: int, seed: int = 0) -> tuple[PointSet, IndexArray]:
    """Like sample_surface, also returning the face each sample was drawn from.

    Raises:
        ContractError: If n < 1 or the mesh has no area.
    """
    if n < 1:
        raise ContractError(f"sample count must be >= 1, got {n}")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if not total > 0.0:
        raise ContractError("cannot sample a mesh with zero total area")
    rng = np.random.default_rng(seed)
    face = rng.choice(mesh.n_faces, size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.vertices[mesh.faces[face]]
    points = (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return PointSet(points, mesh.face_normals()[face]), face.astype(np.int64)


def point_to_plane_distance(mesh: Mesh, points: ArrayLike, faces: ArrayLike) -> FloatArray:
    """Distance from each point to the supporting plane of its paired face."""
    p = np.asarray(points, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    normals = mesh.face_normals()[f]
    origin = mesh.vertices[mesh.faces[f, 0]]
    return np.abs(np.einsum("ij,ij->i", p - origin, normals))
