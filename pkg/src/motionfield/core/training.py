"""Adam and the two training drivers, plus the evaluation bundles they feed.

fit_trajectories fits a motion field to point trajectories; fit_alignment
fits one to per-frame scans under sparse guidance. Both are full batch by
default and deterministic given the model's initialization and cfg.seed. With
cfg.deterministic off, minibatches are drawn from fresh OS entropy instead.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from motionfield.config import (
    DEFAULT_BETAS,
    DEFAULT_EPS,
    LossWeights,
    RegMode,
    TrainConfig,
    resolve_threads,
)
from motionfield.core import tensor as tn
from motionfield.core.losses import (
    GuidancePair,
    NeighborGraph,
    aiap,
    alignment_objective,
    build_neighbor_graph,
    chamfer,
    data_l1,
    elastic,
    epe,
    smoothness,
    temporal_stats,
)
from motionfield.core.motion import MotionModel, frame_times
from motionfield.core.tensor import Array, Tensor
from motionfield.data.trajio import TrajectorySet
from motionfield.errors import ContractError, DivergenceError
from motionfield.geometry.mesh import Mesh, PointSet, vertex_normals
from motionfield.geometry.spatial import KdTree

logger = logging.getLogger(__name__)

ProgressFn = Callable[[int, float], None]


# Optimizer


@dataclass(slots=True)
class AdamState:
    """First and second moment buffers, one per parameter, and the step counter."""

    m: list[Array]
    v: list[Array]
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> AdamState:
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[Array | None],
    st: AdamState,
    lr: float,
    beta1: float = DEFAULT_BETAS[0],
    beta2: float = DEFAULT_BETAS[1],
    eps: float = DEFAULT_EPS,
) -> None:
    """One bias-corrected Adam update, in place on the parameter buffers.

    A missing gradient counts as zero.

    Raises:
        ContractError: If the parameter, gradient and moment lists disagree in length
            or shape.
    """
    if not len(params) == len(grads) == len(st.m) == len(st.v):
        raise ContractError("parameters, gradients and moment buffers must align")
    st.step += 1
    bc1 = 1.0 - beta1**st.step
    bc2 = 1.0 - beta2**st.step
    step_size = lr / bc1
    for p, g, m, v in zip(params, grads, st.m, st.v, strict=True):
        grad = np.zeros(p.shape) if g is None else g
        if grad.shape != p.shape or m.shape != p.shape:
            raise ContractError(f"gradient {grad.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        p.data -= step_size * m / (np.sqrt(v / bc2) + eps)


class Adam:
    """Adam over a fixed list of parameter tensors, reading their .grad."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = DEFAULT_BETAS,
        eps: float = DEFAULT_EPS,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState.for_params(self.params)

    def zero_grad(self) -> None:
        tn.zero_grad(self.params)

    def step(self) -> None:
        adam_step(
            self.params,
            [p.grad for p in self.params],
            self.state,
            self.lr,
            self.betas[0],
            self.betas[1],
            self.eps,
        )


# Reports


@dataclass(slots=True)
class TrainReport:
    """Per-iteration total loss and unweighted per-term losses."""

    losses: list[float] = field(default_factory=list)
    terms: list[dict[str, float]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        if not self.losses:
            raise ContractError("the report holds no iterations")
        return self.losses[-1]

    @property
    def term_names(self) -> list[str]:
        names: list[str] = []
        for row in self.terms:
            names.extend(name for name in row if name not in names)
        return names

    def record(self, iteration: int, loss: Tensor, terms: dict[str, float]) -> float:
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(iteration, value)
        self.losses.append(value)
        self.terms.append(terms)
        return value


def _optimize(
    m: MotionModel,
    cfg: TrainConfig,
    objective: Callable[[int, dict[str, float]], Tensor],
    progress: ProgressFn | None,
) -> TrainReport:
    optimizer = Adam(m.parameters(), cfg.lr, cfg.betas, cfg.eps)
    report = TrainReport()
    for iteration in range(cfg.iters):
        terms: dict[str, float] = {}
        loss = objective(iteration, terms)
        value = report.record(iteration, loss, terms)
        optimizer.zero_grad()
        tape = tn.Tape.record(loss)
        tape.backward()
        tape.clear()
        optimizer.step()
        if cfg.log_every and (iteration % cfg.log_every == 0 or iteration == cfg.iters - 1):
            logger.info("iteration %d: loss %.6g", iteration, value)
        if progress is not None:
            progress(iteration, value)
    return report


def _sampler(cfg: TrainConfig) -> np.random.Generator:
    if cfg.deterministic:
        return np.random.default_rng(cfg.seed)
    logger.debug("minibatch sampling is unseeded")
    return np.random.default_rng()


def _batch(n: int, cfg: TrainConfig, rng: np.random.Generator) -> NDArray[np.int64] | None:
    if cfg.batch_points == "all" or int(cfg.batch_points) >= n:
        return None
    return np.sort(rng.choice(n, size=int(cfg.batch_points), replace=False)).astype(np.int64)


# Trajectory fitting


def fit_trajectories(
    m: MotionModel,
    data: TrajectorySet,
    cfg: TrainConfig | None = None,
    progress: ProgressFn | None = None,
) -> TrainReport:
    """Fit m to the training trajectories of data.

    The objective is the mean over frames of data_l1(warp(x, t_k), y_k) plus the
    regularizers enabled by cfg.reg_mode. Frame 0 is included.

    Raises:
        ContractError: If the split has no training points or dimensions disagree.
        DivergenceError: If the loss becomes NaN or infinite.
    """
    cfg = cfg or TrainConfig()
    train = data.train_indices
    if train.size == 0:
        raise ContractError("the trajectory set has no training points")
    if data.dim != m.spatial_dim:
        raise ContractError(f"{data.dim}D data for a {m.spatial_dim}D model")
    if cfg.reg_mode in (RegMode.H_ROBUST, RegMode.H_HOMOGENEOUS, RegMode.ELASTIC, RegMode.AIAP_H):
        if not m.supports_jacobian:
            raise ContractError(f"{m.variant} cannot be trained with regularizer {cfg.reg_mode}")
    x_all = data.canonical[train]
    y_all = data.targets[:, train]
    t_frames = data.n_frames
    rng = _sampler(cfg)
    full_graph = build_neighbor_graph(x_all) if cfg.reg_mode.uses_aiap else None
    logger.info(
        "fitting %s to %d points x %d frames, reg=%s",
        m.variant,
        len(x_all),
        t_frames,
        cfg.reg_mode,
    )

    def objective(_: int, terms: dict[str, float]) -> Tensor:
        pick = _batch(len(x_all), cfg, rng)
        x = x_all if pick is None else x_all[pick]
        y = y_all if pick is None else y_all[:, pick]
        n = len(x)
        xs = np.tile(x, (t_frames, 1))
        ts = np.repeat(data.times, n)
        warped = m.warp(xs, ts)
        fit = data_l1(warped, y.reshape(-1, data.dim))
        terms["data"] = fit.item()
        total = fit
        mode = cfg.reg_mode
        if mode.uses_smoothness and cfg.smoothness_weight > 0.0:
            reg = smoothness(m, xs, ts, robust=mode.robust, method=cfg.jacobian)
            terms["smoothness"] = reg.item()
            total = total + reg * cfg.smoothness_weight
        if mode is RegMode.ELASTIC and cfg.elastic_weight > 0.0:
            reg = elastic(m, xs, ts, method=cfg.jacobian)
            terms["elastic"] = reg.item()
            total = total + reg * cfg.elastic_weight
        if mode.uses_aiap and cfg.aiap_weight > 0.0:
            graph = full_graph if pick is None else build_neighbor_graph(x)
            assert graph is not None
            frames = [aiap(warped[k * n : (k + 1) * n], x, graph) for k in range(t_frames)]
            reg = tn.stack(frames).mean()
            terms["aiap"] = reg.item()
            total = total + reg * cfg.aiap_weight
        return total

    return _optimize(m, cfg, objective, progress)


# Guided alignment


def fit_alignment(
    m: MotionModel,
    template: Mesh,
    scans: Sequence[PointSet],
    guidance: TrajectorySet,
    cfg: TrainConfig | None = None,
    w: LossWeights | None = None,
    progress: ProgressFn | None = None,
) -> TrainReport:
    """Fit m to per-frame scans and guidance trajectories.

    The points driven to the scans are the frame-0 scan points; template vertices
    are not seen during training. The loss sums the weighted alignment objective
    over frames.

    Raises:
        ContractError: If the scan and guidance frame counts disagree.
        DivergenceError: If the loss becomes NaN or infinite.
    """
    cfg = cfg or TrainConfig()
    w = w or LossWeights()
    w.validate()
    if len(scans) != guidance.n_frames:
        raise ContractError(
            f"{len(scans)} scans but guidance trajectories span {guidance.n_frames} frames"
        )
    if len(scans) < 2:
        raise ContractError("alignment needs at least 2 frames")
    times = frame_times(len(scans))
    trees = [KdTree(scan.points) for scan in scans]
    x_all = scans[0].points
    rng = _sampler(cfg)
    full_graph = build_neighbor_graph(x_all) if w.alpha3 > 0.0 else None
    logger.info(
        "aligning %s over %d frames (%d template vertices held out)",
        m.variant,
        len(scans),
        template.n_vertices,
    )

    def objective(_: int, terms: dict[str, float]) -> Tensor:
        pick = _batch(len(x_all), cfg, rng)
        x = x_all if pick is None else x_all[pick]
        graph: NeighborGraph | None = full_graph
        if pick is not None and w.alpha3 > 0.0:
            graph = build_neighbor_graph(x)
        total = tn.constant(0.0)
        for k, tree in enumerate(trees):
            pair = GuidancePair(guidance.canonical, guidance.targets[k])
            total = total + alignment_objective(m, x, tree, pair, graph, w, times[k], terms)
        return total

    return _optimize(m, cfg, objective, progress)


# Evaluation


@dataclass(slots=True)
class Metrics:
    """One evaluation row; metrics that do not apply stay None."""

    variant: str
    params: int
    seed: int = 0
    epe: float | None = None
    cd: float | None = None
    cdn: float | None = None
    std_e: float | None = None
    std_v: float | None = None


def _frame_map(fn: Callable[[int], Array], n_frames: int, threads: int | None) -> list[Array]:
    workers = min(threads or resolve_threads(), n_frames)
    with tn.no_grad():
        if workers <= 1:
            return [fn(k) for k in range(n_frames)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n_frames)))


def predict_trajectories(
    m: MotionModel, points: Array, times: Array, threads: int | None = None
) -> Array:
    """Warp points to every normalized time; returns T x N x D."""
    return np.stack(_frame_map(lambda k: m.warp(points, times[k]).data, len(times), threads))


def evaluate_trajectories(
    m: MotionModel, data: TrajectorySet, seed: int = 0, threads: int | None = None
) -> Metrics:
    """End-point error on the test split.

    Raises:
        ContractError: If the split has no test points.
    """
    test = data.test_indices
    if test.size == 0:
        raise ContractError("the trajectory set has no test points")
    x = data.canonical[test]
    pred = predict_trajectories(m, x, data.times, threads)
    error = epe(pred, data.targets[:, test], x)
    logger.info("%s test EPE %.6g over %d points", m.variant, error, test.size)
    return Metrics(str(m.variant), m.param_count(), seed, epe=error)


@dataclass(slots=True)
class AlignmentResult:
    metrics: Metrics
    meshes: list[Mesh]


def evaluate_alignment(
    m: MotionModel,
    template: Mesh,
    scans: Sequence[PointSet],
    gt_vertex_traj: Array | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> AlignmentResult:
    """Warp the template to every frame and score it against the scans.

    CD and CDN are averaged over frames; CDN is reported when every scan carries
    normals. STD(E) and STD(V) come from the warped vertex trajectories, and the
    vertex EPE from gt_vertex_traj when given.
    """
    n_frames = len(scans)
    if n_frames < 3:
        raise ContractError("alignment evaluation needs at least 3 frames")
    times = frame_times(n_frames)
    traj = predict_trajectories(m, template.vertices, times, threads)
    meshes = [template.with_vertices(traj[k]) for k in range(n_frames)]
    with_normals = all(scan.normals is not None for scan in scans)

    def score(k: int) -> Array:
        warped = PointSet(meshes[k].vertices, vertex_normals(meshes[k]))
        result = chamfer(warped, scans[k], with_normals=with_normals)
        return np.array([result.cd, np.nan if result.cdn is None else result.cdn])

    scores = np.stack(_frame_map(score, n_frames, threads))
    std_e, std_v = temporal_stats(traj, template.edges)
    metrics = Metrics(
        str(m.variant),
        m.param_count(),
        seed,
        cd=float(scores[:, 0].mean()),
        cdn=float(scores[:, 1].mean()) if with_normals else None,
        std_e=std_e,
        std_v=std_v,
    )
    if gt_vertex_traj is not None:
        metrics.epe = epe(traj, gt_vertex_traj, template.vertices)
    logger.info("%s alignment CD %.6g, STD(V) %.6g", m.variant, metrics.cd, std_v)
    return AlignmentResult(metrics, meshes)
