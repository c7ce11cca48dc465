"""Synthetic sequences: elemental motions, image-grid deformations, a bending cylinder."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from motionfield.config import DEFAULT_TRAIN_FRACTION, MotionKind
from motionfield.core.motion import frame_times
from motionfield.core.tensor import Array
from motionfield.data.trajio import TrajectorySet
from motionfield.errors import ContractError
from motionfield.geometry.mesh import Mesh, PointSet, sample_surface
from motionfield.geometry.primitives import capped_cylinder

logger = logging.getLogger(__name__)

TRANSLATION_DIRECTION = np.array([0.5, 0.3, 0.2])
DEFAULT_MAGNITUDE = {
    MotionKind.TRANSLATION: 1.0,
    MotionKind.ROTATION: math.pi / 2.0,
    MotionKind.SCALING: 1.5,
    MotionKind.SHEARING: 0.5,
}

ELEMENTAL_POINTS = 3000
ELEMENTAL_FRAMES = 20
IMAGE_SIDE = 512
IMAGE_FRAMES = 30

ALIGNMENT_FRAMES = 30
ALIGNMENT_SCAN_POINTS = 4000
ALIGNMENT_GUIDANCE = 200
BEND_DEGREES = 60.0
HINGE_BAND = 0.25

CLIP_STEP = 2
CLIP_LENGTH = 10
CLIP_STARTS = range(10, 326, 5)
CLIP_TRAIN_FRACTION = 0.5


def elemental_transform(
    motion: MotionKind, magnitude: float, alpha: float, dim: int = 3
) -> tuple[Array, Array]:
    """Linear part and offset of an elemental motion at interpolation weight alpha in [0, 1].

    Rotation turns about the z axis (the plane itself in 2D) by alpha * magnitude
    radians, scaling uses factor 1 + (magnitude - 1) * alpha, shearing puts
    alpha * magnitude in the xy entry, translation moves by
    alpha * magnitude * (0.5, 0.3, 0.2).
    """
    motion = MotionKind(motion)
    A = np.eye(dim)
    u = np.zeros(dim)
    if motion is MotionKind.TRANSLATION:
        u = alpha * magnitude * TRANSLATION_DIRECTION[:dim]
    elif motion is MotionKind.ROTATION:
        c, s = math.cos(alpha * magnitude), math.sin(alpha * magnitude)
        A[:2, :2] = [[c, -s], [s, c]]
    elif motion is MotionKind.SCALING:
        A *= 1.0 + (magnitude - 1.0) * alpha
    else:
        A[0, 1] = alpha * magnitude
    return A, u


def _split_mask(n: int, fraction: float, rng: np.random.Generator) -> NDArray[np.bool_]:
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"train fraction must be in (0, 1], got {fraction}")
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: int(round(fraction * n))]] = True
    return mask


def _animate(
    points: Array,
    motion: MotionKind,
    magnitude: float | None,
    n_frames: int,
    train_fraction: float,
    rng: np.random.Generator,
) -> TrajectorySet:
    motion = MotionKind(motion)
    amount = DEFAULT_MAGNITUDE[motion] if magnitude is None else float(magnitude)
    if not math.isfinite(amount):
        raise ContractError(f"magnitude must be finite, got {amount}")
    if n_frames < 2:
        raise ContractError(f"need at least 2 frames, got {n_frames}")
    dim = points.shape[1]
    targets = np.empty((n_frames, *points.shape))
    for k in range(n_frames):
        A, u = elemental_transform(motion, amount, k / (n_frames - 1), dim)
        targets[k] = points @ A.T + u
    targets[0] = points
    mask = _split_mask(len(points), train_fraction, rng)
    return TrajectorySet(points, frame_times(n_frames), targets, mask)


def gen_elemental(
    motion: MotionKind,
    n_points: int = ELEMENTAL_POINTS,
    n_frames: int = ELEMENTAL_FRAMES,
    dim: int = 3,
    magnitude: float | None = None,
    seed: int = 0,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> TrajectorySet:
    """Points uniform in [-1, 1]^dim moved by one elemental motion from identity to full size."""
    if n_points < 1 or dim not in (2, 3):
        raise ContractError(f"need n_points >= 1 and dim in (2, 3), got {n_points}, {dim}")
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(n_points, dim))
    return _animate(points, motion, magnitude, n_frames, train_fraction, rng)


def image_grid(n_side: int) -> Array:
    """Pixel centers of an n_side x n_side image mapped to [-1, 1]^2, row by row."""
    if n_side < 2:
        raise ContractError(f"image side must be >= 2, got {n_side}")
    axis = np.linspace(-1.0, 1.0, n_side)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def gen_image2d(
    motion: MotionKind,
    n_side: int = IMAGE_SIDE,
    magnitude: float | None = None,
    n_frames: int = IMAGE_FRAMES,
    seed: int = 0,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> TrajectorySet:
    """The pixel grid under a 2D elemental motion."""
    rng = np.random.default_rng(seed)
    return _animate(image_grid(n_side), motion, magnitude, n_frames, train_fraction, rng)


# Guided alignment sequence


@dataclass(eq=False)
class AlignmentSequence:
    """A template, per-frame scans, sparse guidance trajectories and the true vertex motion."""

    template: Mesh
    scans: list[PointSet]
    guidance: TrajectorySet
    guidance_indices: NDArray[np.int64]
    vertex_traj: Array

    @property
    def n_frames(self) -> int:
        return len(self.scans)


def bend_angle(
    frame: int, n_frames: int = ALIGNMENT_FRAMES, degrees: float = BEND_DEGREES
) -> float:
    """Bend angle in radians at a frame: degrees * frame / n_frames."""
    return math.radians(degrees * frame / n_frames)


def _smoothstep(v: Array) -> Array:
    c = np.clip(v, 0.0, 1.0)
    return c * c * (3.0 - 2.0 * c)


def bend(vertices: Array, angle: float, hinge_z: float = 0.0, band: float = HINGE_BAND) -> Array:
    """Rotate the part above the hinge about the x axis, blending in over a band.

    Points at or below the hinge stay fixed.
    """
    phi = angle * _smoothstep((vertices[:, 2] - hinge_z) / band)
    c, s = np.cos(phi), np.sin(phi)
    y, z = vertices[:, 1], vertices[:, 2] - hinge_z
    out = vertices.copy()
    out[:, 1] = c * y - s * z
    out[:, 2] = s * y + c * z + hinge_z
    return out


def gen_alignment_sequence(
    seed: int = 0,
    n_frames: int = ALIGNMENT_FRAMES,
    n_scan_points: int = ALIGNMENT_SCAN_POINTS,
    n_guidance: int = ALIGNMENT_GUIDANCE,
    n_around: int = 32,
    n_rings: int = 64,
    degrees: float = BEND_DEGREES,
) -> AlignmentSequence:
    """A capped cylinder bending about a hinge at z = 0, sampled into scans every frame."""
    if n_frames < 3:
        raise ContractError(f"alignment sequences need at least 3 frames, got {n_frames}")
    template = capped_cylinder(n_around=n_around, n_rings=n_rings)
    if not 1 <= n_guidance <= template.n_vertices:
        raise ContractError(f"guidance count must be in [1, {template.n_vertices}]")
    rng = np.random.default_rng(seed)
    traj = np.stack(
        [bend(template.vertices, bend_angle(k, n_frames, degrees)) for k in range(n_frames)]
    )
    scans = [
        sample_surface(template.with_vertices(traj[k]), n_scan_points, seed=seed + k)
        for k in range(n_frames)
    ]
    picked = np.sort(rng.choice(template.n_vertices, size=n_guidance, replace=False))
    guidance = TrajectorySet(
        traj[0, picked],
        frame_times(n_frames),
        traj[:, picked],
        np.ones(n_guidance, dtype=bool),
    )
    return AlignmentSequence(template, scans, guidance, picked.astype(np.int64), traj)


# Fluid-style clips


def extract_clips(
    ts: TrajectorySet,
    step: int = CLIP_STEP,
    clip_len: int = CLIP_LENGTH,
    starts: Iterable[int] = CLIP_STARTS,
    train_fraction: float = CLIP_TRAIN_FRACTION,
    seed: int = 0,
) -> list[TrajectorySet]:
    """Cut a long recording into short clips whose first frame is canonical.

    The sequence is downsampled by step, then every start (in downsampled frames)
    that leaves room for clip_len frames yields one clip with its own split.
    """
    if step < 1 or clip_len < 2:
        raise ContractError(f"need step >= 1 and clip_len >= 2, got {step}, {clip_len}")
    frames = ts.targets[::step]
    rng = np.random.default_rng(seed)
    clips = []
    skipped = 0
    for start in starts:
        if start < 0 or start + clip_len > len(frames):
            skipped += 1
            continue
        window = frames[start : start + clip_len]
        mask = _split_mask(ts.n_points, train_fraction, rng)
        clips.append(TrajectorySet(window[0].copy(), frame_times(clip_len), window, mask))
    if skipped:
        logger.warning(
            "skipped %d clip starts beyond the %d downsampled frames", skipped, len(frames)
        )
    if not clips:
        raise ContractError("no clip fits in the downsampled sequence")
    return clips
