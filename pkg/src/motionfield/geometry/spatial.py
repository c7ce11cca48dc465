"""Exact nearest-neighbor search over point sets."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from motionfield.errors import ContractError

# Candidates examined per query when resolving equidistant neighbors; a query
# whose candidates are all tied falls back to a radius search.
TIE_CANDIDATES = 8
TIE_SLACK = 1e-9


class KdTree:
    """Balanced kd-tree over an N x D point array.

    Queries return the exact nearest index; equidistant points resolve to the
    lowest index.
    """

    def __init__(self, points: ArrayLike) -> None:
        data = np.asarray(points, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ContractError(f"kd-tree needs a non-empty N x D array, got shape {data.shape}")
        self.points = data
        self._tree = cKDTree(data)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def query(self, queries: ArrayLike) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Nearest index and Euclidean distance for every row of an M x D array."""
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != self.points.shape[1]:
            raise ContractError(
                f"queries must be M x {self.points.shape[1]}, got shape {q.shape}"
            )
        if q.shape[0] == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        k = min(TIE_CANDIDATES, len(self))
        dist, idx = self._tree.query(q, k=k)
        if k == 1:
            return np.asarray(idx, dtype=np.int64), np.asarray(dist, dtype=np.float64)
        dist = np.asarray(dist).reshape(q.shape[0], k)
        idx = np.asarray(idx).reshape(q.shape[0], k)
        tied = dist == dist[:, :1]
        pick = np.where(tied, idx, np.iinfo(np.int64).max).min(axis=1)
        if k < len(self):
            for row in np.flatnonzero(tied.all(axis=1)):
                pick[row] = self._lowest_tie(q[row], float(dist[row, 0]))
        return pick.astype(np.int64), dist[:, 0].astype(np.float64)

    def _lowest_tie(self, point: NDArray[np.float64], radius: float) -> int:
        reach = radius * (1.0 + TIE_SLACK) + TIE_SLACK
        cand = np.asarray(self._tree.query_ball_point(point, r=reach), dtype=np.int64)
        d = np.linalg.norm(self.points[cand] - point, axis=1)
        return int(cand[d == d.min()].min())

    def query_k(
        self, queries: ArrayLike, k: int
    ) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """The k nearest indices and distances per query, closest first."""
        if not 1 <= k <= len(self):
            raise ContractError(f"k must be in [1, {len(self)}], got {k}")
        q = np.asarray(queries, dtype=np.float64)
        dist, idx = self._tree.query(q, k=k)
        return (
            np.asarray(idx, dtype=np.int64).reshape(q.shape[0], k),
            np.asarray(dist, dtype=np.float64).reshape(q.shape[0], k),
        )


def build_kdtree(points: ArrayLike) -> KdTree:
    return KdTree(points)


def nearest(tree: KdTree, point: ArrayLike) -> tuple[int, float]:
    """Index of and distance to the nearest tree point of a single query point."""
    idx, dist = tree.query(np.asarray(point, dtype=np.float64).reshape(1, -1))
    return int(idx[0]), float(dist[0])
