"""Comparison models trained by the same drivers as the SIREN fields.

relu-pe    y = x + MLP_relu(PE_L([x; t]))
bonecloud  y = (sum_k w_k(x) T_k^t) [x; 1], w_k proportional to exp(-sigma |x - v_k|)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from motionfield.config import Variant
from motionfield.core import tensor as tn
from motionfield.core.motion import (
    MotionModel,
    ROT2D_BIAS,
    ROT6D_BIAS,
    TimeLike,
    per_frame,
    rot2d_to_matrix,
    rot6d_to_matrix,
    time_column,
)
from motionfield.core.tensor import Tensor
from motionfield.errors import ContractError, DegeneracyError

logger = logging.getLogger(__name__)

RELU_HIDDEN = 128
RELU_LAYERS = 6
PE_LEVELS = 6
BONE_COUNT = 1024
BONE_SIGMA = 10.0
DISTANCE_EPS = 1e-24


# Positional encoding


def fourier_pe(p: Tensor | ArrayLike, levels: int) -> Tensor:
    """[p, sin(pi p), cos(pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)]."""
    if levels < 0:
        raise ContractError(f"encoding levels must be >= 0, got {levels}")
    tp = tn.as_tensor(p)
    parts = [tp]
    for k in range(levels):
        scaled = tp * (2.0**k * np.pi)
        parts += [tn.sin(scaled), tn.cos(scaled)]
    return tn.concat(parts, axis=-1) if levels else tp


def encoded_width(dim: int, levels: int) -> int:
    return dim + 2 * levels * dim


# ReLU MLP


@dataclass(slots=True)
class ReluPEParams:
    """ReLU MLP over positionally encoded [x; t] predicting a displacement."""

    in_dim: int
    hidden_dim: int
    n_hidden: int
    out_dim: int
    pe_levels: int
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in zip(self.weights, self.biases, strict=True):
            out.extend((w, b))
        return out

    def weight_count(self) -> int:
        return sum(w.size for w in self.weights)


def init_relu(
    in_dim: int,
    out_dim: int,
    hidden_dim: int = RELU_HIDDEN,
    n_hidden: int = RELU_LAYERS,
    pe_levels: int = PE_LEVELS,
    seed: int = 0,
) -> ReluPEParams:
    """Layers drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases included."""
    if min(in_dim, out_dim, hidden_dim, n_hidden) < 1 or pe_levels < 0:
        raise ContractError("invalid ReLU MLP shape")
    rng = np.random.default_rng(seed)
    first = encoded_width(in_dim, pe_levels)
    shapes = [(hidden_dim, first)] + [(hidden_dim, hidden_dim)] * (n_hidden - 1)
    shapes.append((out_dim, hidden_dim))
    params = ReluPEParams(in_dim, hidden_dim, n_hidden, out_dim, pe_levels)
    for rows, fan_in in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        params.weights.append(tn.parameter(rng.uniform(-bound, bound, size=(rows, fan_in))))
        params.biases.append(tn.parameter(rng.uniform(-bound, bound, size=rows)))
    return params


def relu_forward(params: ReluPEParams, q: Tensor | ArrayLike) -> Tensor:
    tq = tn.as_tensor(q)
    if tq.ndim != 2 or tq.shape[1] != params.in_dim:
        raise ContractError(f"queries must be B x {params.in_dim}, got {tq.shape}")
    h = fourier_pe(tq, params.pe_levels)
    for w, b in zip(params.weights[:-1], params.biases[:-1], strict=True):
        h = tn.relu(h @ w.T + b)
    return h @ params.weights[-1].T + params.biases[-1]


@dataclass(eq=False)
class ReluMotionModel(MotionModel):
    """Translation field y = x + u(x, t) from a ReLU MLP."""

    params: ReluPEParams
    spatial_dim: int = 3
    t_min: float = 0.0
    t_max: float = 1.0
    variant: Variant = field(default=Variant.RELU_PE, init=False)

    def __post_init__(self) -> None:
        if self.params.in_dim != self.spatial_dim + 1 or self.params.out_dim != self.spatial_dim:
            raise ContractError("the ReLU field maps [x; t] to a displacement")

    def parameters(self) -> list[Tensor]:
        return self.params.parameters()

    def param_count(self) -> int:
        return self.params.weight_count()

    def warp(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        tx = tn.as_tensor(x)
        if tx.ndim != 2 or tx.shape[1] != self.spatial_dim:
            raise ContractError(f"points must be B x {self.spatial_dim}, got {tx.shape}")
        q = tn.concat([tx, time_column(t_norm, tx.shape[0])], axis=1)
        return tx + relu_forward(self.params, q)


# BoneCloud


@dataclass(slots=True)
class BoneCloudParams:
    """Bone positions and one rigid transform per bone per frame."""

    bones: Tensor
    rotations: Tensor
    translations: Tensor
    sigma: float = BONE_SIGMA

    def __post_init__(self) -> None:
        k, s = self.bones.shape
        t = self.rotations.shape[0]
        width = 6 if s == 3 else 2
        if k < 1 or self.rotations.shape != (t, k, width) or self.translations.shape != (t, k, s):
            raise ContractError("bone transforms must be T x K x rotation/translation blocks")
        if not self.sigma > 0.0:
            raise ContractError(f"sigma must be > 0, got {self.sigma}")

    @property
    def n_bones(self) -> int:
        return int(self.bones.shape[0])

    @property
    def n_frames(self) -> int:
        return int(self.rotations.shape[0])

    @property
    def spatial_dim(self) -> int:
        return int(self.bones.shape[1])

    def parameters(self) -> list[Tensor]:
        return [self.bones, self.rotations, self.translations]


def init_bonecloud(
    points: ArrayLike,
    n_frames: int,
    n_bones: int = BONE_COUNT,
    sigma: float = BONE_SIGMA,
    seed: int = 0,
) -> BoneCloudParams:
    """Bones uniform in the bounding box of points; every transform starts at identity."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
        raise ContractError(f"bone placement needs an N x 2 or N x 3 array, got {pts.shape}")
    if n_frames < 1 or n_bones < 1:
        raise ContractError("need at least one frame and one bone")
    rng = np.random.default_rng(seed)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    s = pts.shape[1]
    bias = ROT6D_BIAS if s == 3 else ROT2D_BIAS
    return BoneCloudParams(
        tn.parameter(rng.uniform(lo, hi, size=(n_bones, s))),
        tn.parameter(np.tile(bias, (n_frames, n_bones, 1))),
        tn.parameter(np.zeros((n_frames, n_bones, s))),
        sigma,
    )


def bone_weights(params: BoneCloudParams, x: Tensor | ArrayLike) -> Tensor:
    """Normalized B x K skinning weights.

    Raises:
        DegeneracyError: If every weight of a point underflows to zero.
    """
    tx = tn.as_tensor(x)
    b, s = tx.shape
    diff = tx.reshape(b, 1, s) - params.bones.reshape(1, params.n_bones, s)
    dist = tn.sqrt(tn.square(diff).sum(axis=-1) + DISTANCE_EPS)
    raw = tn.exp(dist * -params.sigma)
    total = raw.sum(axis=1, keepdims=True)
    empty = np.flatnonzero(total.data[:, 0] <= 0.0)
    if empty.size:
        raise DegeneracyError(
            f"all bone weights underflow for sigma={params.sigma}; use a smaller sigma",
            row=int(empty[0]),
        )
    return raw / total


def bonecloud_warp(params: BoneCloudParams, x: Tensor | ArrayLike, frame: int) -> Tensor:
    """Linear blend skinning of points to one frame."""
    if not 0 <= frame < params.n_frames:
        raise ContractError(f"frame {frame} outside 0..{params.n_frames - 1}")
    tx = tn.as_tensor(x)
    b, s = tx.shape
    if s != params.spatial_dim:
        raise ContractError(f"points must be B x {params.spatial_dim}, got {tx.shape}")
    w = bone_weights(params, tx)
    rot_raw = params.rotations[frame]
    R = rot6d_to_matrix(rot_raw) if s == 3 else rot2d_to_matrix(rot_raw)
    blended = (w @ R.reshape(params.n_bones, s * s)).reshape(b, s, s)
    shift = w @ params.translations[frame]
    return (blended @ tx.reshape(b, s, 1)).reshape(b, s) + shift


@dataclass(eq=False)
class BoneCloudMotionModel(MotionModel):
    params: BoneCloudParams
    t_min: float = 0.0
    t_max: float = 1.0
    variant: Variant = field(default=Variant.BONECLOUD, init=False)
    spatial_dim: int = field(default=3, init=False)

    def __post_init__(self) -> None:
        self.spatial_dim = self.params.spatial_dim

    def parameters(self) -> list[Tensor]:
        return self.params.parameters()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def warp(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        tx = tn.as_tensor(x)
        return per_frame(
            tx,
            t_norm,
            self.params.n_frames,
            lambda k, pts: bonecloud_warp(self.params, pts, k),
        )


def build_relu_model(
    spatial_dim: int = 3,
    n_frames: int = 2,
    hidden_dim: int = RELU_HIDDEN,
    n_hidden: int = RELU_LAYERS,
    pe_levels: int = PE_LEVELS,
    seed: int = 0,
) -> ReluMotionModel:
    params = init_relu(spatial_dim + 1, spatial_dim, hidden_dim, n_hidden, pe_levels, seed)
    return ReluMotionModel(params, spatial_dim, 0.0, float(max(n_frames - 1, 1)))


def build_bonecloud_model(
    points: ArrayLike,
    n_frames: int,
    n_bones: int = BONE_COUNT,
    sigma: float = BONE_SIGMA,
    seed: int = 0,
) -> BoneCloudMotionModel:
    params = init_bonecloud(points, n_frames, n_bones, sigma, seed)
    return BoneCloudMotionModel(params, 0.0, float(max(n_frames - 1, 1)))

