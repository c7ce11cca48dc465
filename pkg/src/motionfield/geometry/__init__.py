"""Meshes, point sets, nearest-neighbor search and mesh file formats."""

from motionfield.geometry.io import load_mesh, load_points, save_mesh, save_points
from motionfield.geometry.mesh import Mesh, PointSet, sample_surface, vertex_normals
from motionfield.geometry.primitives import capped_cylinder, icosphere
from motionfield.geometry.spatial import KdTree, build_kdtree, nearest

__all__ = [
    "KdTree",
    "Mesh",
    "PointSet",
    "build_kdtree",
    "capped_cylinder",
    "icosphere",
    "load_mesh",
    "load_points",
    "nearest",
    "sample_surface",
    "save_mesh",
    "save_points",
    "vertex_normals",
]
