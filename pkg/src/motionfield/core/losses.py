"""Training objectives and evaluation metrics.

Tape-connected losses take Tensors and return scalar Tensors; metrics take
arrays and return floats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from motionfield.config import AIAP_NEIGHBORS, LossWeights
from motionfield.core import tensor as tn
from motionfield.core.motion import MotionModel, TimeLike
from motionfield.core.siren import JacobianMethod
from motionfield.core.tensor import Array, Tensor
from motionfield.errors import ContractError
from motionfield.geometry.mesh import PointSet
from motionfield.geometry.spatial import KdTree

logger = logging.getLogger(__name__)

# Added under square roots of distances so their gradient stays finite at 0.
DISTANCE_EPS = 1e-24


# Data terms


def data_l1(pred: Tensor, target: Tensor | ArrayLike) -> Tensor:
    """Mean over points of the L1 norm of pred - target."""
    tt = tn.as_tensor(target)
    if pred.shape != tt.shape:
        raise ContractError(f"prediction {pred.shape} and target {tt.shape} differ")
    return tn.absolute(pred - tt).sum(axis=1).mean()


def epe(pred_traj: ArrayLike, gt_traj: ArrayLike, canonical: ArrayLike) -> float:
    """End-point error: mean over frames and points of |v - v_gt|_1 with v = y - x."""
    pred = np.asarray(pred_traj, dtype=np.float64)
    gt = np.asarray(gt_traj, dtype=np.float64)
    x = np.asarray(canonical, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[1:] != x.shape:
        raise ContractError(
            f"trajectory shapes disagree: {pred.shape}, {gt.shape}, canonical {x.shape}"
        )
    flow, flow_gt = pred - x, gt - x
    return float(np.abs(flow - flow_gt).sum(axis=-1).mean())


# Chamfer


@dataclass(slots=True, frozen=True)
class ChamferResult:
    cd: float
    cdn: float | None = None


def _as_points(value: PointSet | ArrayLike) -> tuple[Array, Array | None]:
    if isinstance(value, PointSet):
        return value.points, value.normals
    pts = np.asarray(value, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ContractError(f"point set must be a non-empty N x D array, got {pts.shape}")
    return pts, None


def chamfer(
    a: PointSet | ArrayLike,
    b: PointSet | ArrayLike,
    with_normals: bool = False,
    tree_a: KdTree | None = None,
    tree_b: KdTree | None = None,
) -> ChamferResult:
    """Symmetric Chamfer distance on squared distances, optionally with the normal term.

    cd = (mean_a min_b |p - q|^2 + mean_b min_a |p - q|^2) / 2 and
    cdn = (mean over both directions of 1 - |n_p . n_q|) / 2 on the same pairs.

    Raises:
        ContractError: If a set is empty or normals are requested but missing.
    """
    pa, na = _as_points(a)
    pb, nb = _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ContractError("Chamfer distance needs two non-empty point sets")
    tree_a = KdTree(pa) if tree_a is None else tree_a
    tree_b = KdTree(pb) if tree_b is None else tree_b
    idx_ab, dist_ab = tree_b.query(pa)
    idx_ba, dist_ba = tree_a.query(pb)
    cd = 0.5 * (float(np.mean(dist_ab**2)) + float(np.mean(dist_ba**2)))
    if not with_normals:
        return ChamferResult(cd)
    if na is None or nb is None:
        raise ContractError("normal Chamfer distance needs normals on both sets")
    cos_ab = np.abs(np.einsum("ij,ij->i", na, nb[idx_ab]))
    cos_ba = np.abs(np.einsum("ij,ij->i", nb, na[idx_ba]))
    cdn = 0.5 * (float(np.mean(1.0 - cos_ab)) + float(np.mean(1.0 - cos_ba)))
    return ChamferResult(cd, cdn)


def chamfer_loss(pred: Tensor, target: KdTree) -> Tensor:
    """Differentiable Chamfer distance with nearest pairs fixed at the current positions."""
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise ContractError(f"prediction must be a non-empty N x D tensor, got {pred.shape}")
    idx_ab, _ = target.query(pred.data)
    idx_ba, _ = KdTree(pred.data).query(target.points)
    forward = tn.square(pred - target.points[idx_ab]).sum(axis=1).mean()
    backward = tn.square(pred[idx_ba] - target.points).sum(axis=1).mean()
    return (forward + backward) * 0.5


# As-isometric-as-possible


@dataclass(slots=True)
class NeighborGraph:
    """K nearest canonical neighbors of every point, excluding the point itself."""

    indices: NDArray[np.int64]
    distances: Array

    @property
    def k(self) -> int:
        return int(self.indices.shape[1])

    def __len__(self) -> int:
        return int(self.indices.shape[0])


def _pair_distance(a: Array, b: Array) -> Array:
    return np.sqrt(np.sum((a - b) ** 2, axis=-1) + DISTANCE_EPS)


def build_neighbor_graph(points: ArrayLike, k: int = AIAP_NEIGHBORS) -> NeighborGraph:
    """K-nearest-neighbor graph on canonical points."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1 or n < k + 1:
        raise ContractError(f"need k >= 1 and more than k points, got k={k}, n={n}")
    idx, _ = KdTree(pts).query_k(pts, k + 1)
    # Put every non-self candidate first, keeping distance order.
    not_self = idx != np.arange(n)[:, None]
    order = np.argsort(~not_self, axis=1, kind="stable")
    neighbors = np.take_along_axis(idx, order, axis=1)[:, :k]
    return NeighborGraph(neighbors, _pair_distance(pts[:, None, :], pts[neighbors]))


def aiap(warped: Tensor, canonical: ArrayLike, graph: NeighborGraph) -> Tensor:
    """Mean squared change of neighbor distances between canonical and warped points."""
    c = np.asarray(canonical, dtype=np.float64)
    if warped.shape != c.shape or len(graph) != c.shape[0]:
        raise ContractError("warped points, canonical points and graph must agree in size")
    n = len(graph)
    diff = warped[graph.indices] - warped.reshape(n, 1, c.shape[1])
    dist = tn.sqrt(tn.square(diff).sum(axis=-1) + DISTANCE_EPS)
    rest = _pair_distance(c[:, None, :], c[graph.indices])
    return tn.square(dist - rest).mean()


# Jacobian regularizers


def charbonnier(s2: Tensor | ArrayLike) -> Tensor:
    """Psi(s^2) = sqrt(1 + s^2) - 1."""
    return tn.sqrt(tn.as_tensor(s2) + 1.0) - 1.0


def _require_jacobian(m: MotionModel) -> None:
    if not m.supports_jacobian:
        raise ContractError(f"{m.variant} does not provide spatial gradients")


def smoothness(
    m: MotionModel,
    samples: Tensor | ArrayLike,
    times: TimeLike,
    robust: bool = True,
    method: JacobianMethod = "analytical",
) -> Tensor:
    """Mean over samples of Psi(|dA|^2 + |du|^2), or of the raw sum when not robust."""
    _require_jacobian(m)
    dA, du = m.field_gradients(samples, times, method)
    b = du.shape[0]
    s2 = tn.square(du).reshape(b, -1).sum(axis=1)
    if dA is not None:
        s2 = s2 + tn.square(dA).reshape(b, -1).sum(axis=1)
    penalty = charbonnier(s2) if robust else s2
    return penalty.mean()


def elastic(
    m: MotionModel,
    samples: Tensor | ArrayLike,
    times: TimeLike,
    method: JacobianMethod = "analytical",
) -> Tensor:
    """Mean over samples of |J^T J - I|_F^2 for the motion Jacobian J."""
    _require_jacobian(m)
    jac = m.motion_jacobian(samples, times, method)
    gram = jac.transpose(0, 2, 1) @ jac
    eye = np.eye(jac.shape[-1])
    return tn.square(gram - eye).sum(axis=(1, 2)).mean()


# Guided alignment


@dataclass(slots=True)
class GuidancePair:
    """Index-matched guidance points: canonical positions and their frame-t positions."""

    canonical: Array
    target: Array

    def __post_init__(self) -> None:
        self.canonical = np.asarray(self.canonical, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.canonical.shape != self.target.shape:
            raise ContractError("guidance canonical and target points must be index-matched")


def alignment_objective(
    m: MotionModel,
    template_pts: ArrayLike,
    target_scan: KdTree,
    guidance: GuidancePair,
    graph: NeighborGraph | None,
    w: LossWeights,
    t_norm: float,
    terms: dict[str, float] | None = None,
) -> Tensor:
    """Weighted Chamfer + guidance L1 + AIAP + smoothness for one frame.

    Terms with a zero weight are not evaluated and contribute exactly 0. When
    terms is given it receives the unweighted value of every evaluated term.
    """
    w.validate()
    x = np.asarray(template_pts, dtype=np.float64)
    total = tn.constant(0.0)
    parts: dict[str, Tensor] = {}
    warped: Tensor | None = None
    if w.alpha1 > 0.0 or w.alpha3 > 0.0:
        warped = m.warp(x, t_norm)
    if w.alpha1 > 0.0 and warped is not None:
        parts["chamfer"] = chamfer_loss(warped, target_scan)
        total = total + parts["chamfer"] * w.alpha1
    if w.alpha2 > 0.0:
        parts["guidance"] = data_l1(m.warp(guidance.canonical, t_norm), guidance.target)
        total = total + parts["guidance"] * w.alpha2
    if w.alpha3 > 0.0 and warped is not None:
        if graph is None:
            raise ContractError("AIAP needs a neighbor graph")
        parts["aiap"] = aiap(warped, x, graph)
        total = total + parts["aiap"] * w.alpha3
    if w.alpha4 > 0.0:
        parts["smoothness"] = smoothness(m, x, t_norm, robust=True)
        total = total + parts["smoothness"] * w.alpha4
    if terms is not None:
        for name, value in parts.items():
            terms[name] = terms.get(name, 0.0) + value.item()
    return total


# Temporal statistics


def temporal_stats(vertex_traj: ArrayLike, edges: ArrayLike) -> tuple[float, float]:
    """STD(E): max over edges of the temporal std of edge length.

    STD(V): mean over vertices of the temporal std of the per-step speed
    |x_{t+1} - x_t|. Both use the population std.
    """
    traj = np.asarray(vertex_traj, dtype=np.float64)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if traj.ndim != 3 or traj.shape[0] < 3:
        raise ContractError(f"temporal statistics need at least 3 frames, got {traj.shape}")
    lengths = np.linalg.norm(traj[:, e[:, 0]] - traj[:, e[:, 1]], axis=-1)
    std_e = float(lengths.std(axis=0).max()) if e.size else 0.0
    speed = np.linalg.norm(np.diff(traj, axis=0), axis=-1)
    std_v = float(speed.std(axis=0).mean())
    return std_e, std_v
