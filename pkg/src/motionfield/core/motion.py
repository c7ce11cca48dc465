"""Motion models: mapping network outputs to per-point transformations.

A SIREN-backed field evaluates one network on [x; t] and reads its raw output
through a variant head:

    trans       A = I                       u = raw
    se3         A = R(raw[:6] + r0)         u = raw[6:]
    scaled-se3  A = s R, s = softplus(.)    u = raw[7:]
    affinity    A = raw[:9] + I (row-major) u = raw[9:]

The warp is y = A(x, t) x + u(x, t). Its spatial Jacobian A + <dA, x> + du is
assembled from the network's analytical Jacobian pushed through the same head,
so the result stays differentiable with respect to the weights.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
from numpy.typing import ArrayLike

from motionfield.config import DEFAULT_HIDDEN, DEFAULT_LAYERS, DEFAULT_OMEGA, Variant
from motionfield.core import siren
from motionfield.core import tensor as tn
from motionfield.core.siren import JacobianMethod, SirenParams
from motionfield.core.tensor import Array, Tensor
from motionfield.errors import ContractError, DegeneracyError, DomainError

logger = logging.getLogger(__name__)

RESHAPE_ROW_MAJOR = 0

# softplus(SCALE_BIAS) == 1
SCALE_BIAS = math.log(math.e - 1.0)
ROT6D_BIAS = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
ROT2D_BIAS = np.array([1.0, 0.0])
DEGENERACY_TOL = 1e-12
FRAME_TOL = 1e-6
# times read back from float32 files drift by a few ulps per frame
F32_FRAME_DRIFT = 4.0 * float(np.finfo(np.float32).eps)

TimeLike: TypeAlias = float | ArrayLike
_FrameFn: TypeAlias = Callable[[int, Tensor], Tensor]


@dataclass(slots=True)
class AffineMap:
    """Batch of per-point affine maps y = A x + u."""

    A: Tensor
    u: Tensor

    def apply(self, x: Tensor | ArrayLike) -> Tensor:
        tx = tn.as_tensor(x)
        b, s = tx.shape
        return (self.A @ tx.reshape(b, s, 1)).reshape(b, s) + self.u


# Time normalization


def normalize_time(frame: ArrayLike, n_frames: int) -> Array:
    """Map raw frame indices 0..T-1 to [-1, 1]."""
    if n_frames < 2:
        raise ContractError(f"time normalization needs at least 2 frames, got {n_frames}")
    return -1.0 + 2.0 * np.asarray(frame, dtype=np.float64) / (n_frames - 1)


def frame_times(n_frames: int) -> Array:
    return normalize_time(np.arange(n_frames), n_frames)


def frame_index(t_norm: ArrayLike, n_frames: int) -> Array:
    """Inverse of normalize_time; rejects times that do not land on a frame."""
    raw = (np.asarray(t_norm, dtype=np.float64) + 1.0) * 0.5 * (n_frames - 1)
    index = np.rint(raw)
    tol = max(FRAME_TOL, F32_FRAME_DRIFT * (n_frames - 1))
    if np.any(np.abs(raw - index) > tol) or np.any(index < 0) or np.any(
        index > n_frames - 1
    ):
        raise ContractError(f"time {t_norm} does not fall on one of {n_frames} frames")
    return index.astype(np.int64)


# Rotation parameterizations


def _unit(v: Tensor) -> tuple[Tensor, Tensor]:
    length = tn.norm(v, axis=-1, keepdims=True)
    return v / length, length


def _check_degenerate(lengths: Array, what: str) -> None:
    bad = np.flatnonzero(lengths.reshape(-1) <= DEGENERACY_TOL)
    if bad.size:
        raise DegeneracyError(f"{what} has (near) zero length", row=int(bad[0]))


@dataclass(slots=True)
class _GramSchmidt:
    """Intermediates of the 6D orthogonalization, kept for the tangent map."""

    a2: Tensor
    c1: Tensor
    c2: Tensor
    c3: Tensor
    n1: Tensor
    n2: Tensor
    proj: Tensor

    @property
    def matrix(self) -> Tensor:
        return tn.stack([self.c1, self.c2, self.c3], axis=-1)


def _gram_schmidt(r: Tensor) -> _GramSchmidt:
    a1, a2 = r[..., 0:3], r[..., 3:6]
    _check_degenerate(np.linalg.norm(a1.data, axis=-1), "first rotation column")
    c1, n1 = _unit(a1)
    proj = tn.dot(c1, a2, keepdims=True)
    b2 = a2 - proj * c1
    _check_degenerate(np.linalg.norm(b2.data, axis=-1), "second rotation column")
    c2, n2 = _unit(b2)
    return _GramSchmidt(a2, c1, c2, tn.cross(c1, c2), n1, n2, proj)


def rot6d_to_matrix(r: Tensor | ArrayLike) -> Tensor:
    """Orthogonalize B x 6 vectors into B x 3 x 3 rotations with columns c1, c2, c3.

    Raises:
        DegeneracyError: If a row's first 3-vector vanishes or the two halves are parallel.
    """
    tr = tn.as_tensor(r)
    if tr.ndim != 2 or tr.shape[1] != 6:
        raise ContractError(f"6D rotations must be B x 6, got {tr.shape}")
    return _gram_schmidt(tr).matrix


def _rot6d_tangent(gs: _GramSchmidt, dr: Tensor) -> Tensor:
    """Directional derivatives of the rotation along B x K x 6 input tangents.

    Returns B x K x 3 x 3. The intermediates in gs carry shape B x 1 x 3.
    """
    da1, da2 = dr[..., 0:3], dr[..., 3:6]
    c1, c2 = gs.c1, gs.c2
    dc1 = (da1 - c1 * tn.dot(c1, da1, keepdims=True)) / gs.n1
    dproj = tn.dot(dc1, gs.a2, keepdims=True) + tn.dot(c1, da2, keepdims=True)
    db2 = da2 - dproj * c1 - gs.proj * dc1
    dc2 = (db2 - c2 * tn.dot(c2, db2, keepdims=True)) / gs.n2
    dc3 = tn.cross(dc1, c2) + tn.cross(c1, dc2)
    return tn.stack([dc1, dc2, dc3], axis=-1)


def rot2d_to_matrix(r: Tensor | ArrayLike) -> Tensor:
    """Normalize B x 2 vectors (cos, sin) into B x 2 x 2 rotations."""
    tr = tn.as_tensor(r)
    _check_degenerate(np.linalg.norm(tr.data, axis=-1), "2D rotation vector")
    c, _ = _unit(tr)
    return _rot2d_assemble(c)


def _rot2d_assemble(c: Tensor) -> Tensor:
    cos, sin = c[..., 0], c[..., 1]
    return tn.stack([tn.stack([cos, -sin], axis=-1), tn.stack([sin, cos], axis=-1)], axis=-2)


# Variant heads


@dataclass(slots=True)
class _HeadOutput:
    A: Tensor | None  # None means identity
    u: Tensor
    dA: Tensor | None = None  # B x K x S x S, None means zero
    du: Tensor | None = None  # B x S x K


def _rotation_width(spatial_dim: int) -> int:
    return 6 if spatial_dim == 3 else 2


def _rotation(
    raw_rot: Tensor, jac_rot: Tensor | None, spatial_dim: int
) -> tuple[Tensor, Tensor | None]:
    """Rotation block and (optionally) its B x K x S x S spatial derivative."""
    b = raw_rot.shape[0]
    if spatial_dim == 3:
        gs = _gram_schmidt(raw_rot + ROT6D_BIAS)
        R = gs.matrix
        if jac_rot is None:
            return R, None
        lifted = _GramSchmidt(
            gs.a2.reshape(b, 1, 3),
            gs.c1.reshape(b, 1, 3),
            gs.c2.reshape(b, 1, 3),
            gs.c3.reshape(b, 1, 3),
            gs.n1.reshape(b, 1, 1),
            gs.n2.reshape(b, 1, 1),
            gs.proj.reshape(b, 1, 1),
        )
        return R, _rot6d_tangent(lifted, jac_rot.transpose(0, 2, 1))
    shifted = raw_rot + ROT2D_BIAS
    _check_degenerate(np.linalg.norm(shifted.data, axis=-1), "2D rotation vector")
    c, length = _unit(shifted)
    R = _rot2d_assemble(c)
    if jac_rot is None:
        return R, None
    k = jac_rot.shape[2]
    dr = jac_rot.transpose(0, 2, 1)
    c3 = c.reshape(b, 1, 2)
    dc = (dr - c3 * tn.dot(c3, dr, keepdims=True)) / length.reshape(b, 1, 1)
    return R, _rot2d_assemble(dc).reshape(b, k, 2, 2)


def _apply_head(
    variant: Variant, raw: Tensor, jac: Tensor | None, spatial_dim: int
) -> _HeadOutput:
    s = spatial_dim
    b = raw.shape[0]
    if variant is Variant.TRANS:
        return _HeadOutput(None, raw, None, jac)
    if variant is Variant.AFFINITY:
        A = (raw[:, : s * s] + np.eye(s).reshape(-1)).reshape(b, s, s)
        dA = None
        if jac is not None:
            dA = jac[:, : s * s, :].transpose(0, 2, 1).reshape(b, s, s, s)
        du = jac[:, s * s :, :] if jac is not None else None
        return _HeadOutput(A, raw[:, s * s :], dA, du)

    width = _rotation_width(s)
    R, dR = _rotation(raw[:, :width], jac[:, :width, :] if jac is not None else None, s)
    if variant is Variant.SE3:
        du = jac[:, width:, :] if jac is not None else None
        return _HeadOutput(R, raw[:, width:], dR, du)
    if variant is Variant.SCALED_SE3:
        pre = raw[:, width : width + 1] + SCALE_BIAS
        scale = tn.softplus(pre).reshape(b, 1, 1)
        A = R * scale
        dA = du = None
        if jac is not None and dR is not None:
            # ds/dx_k = sigmoid(pre) * d raw_s / dx_k
            ds = (tn.sigmoid(pre) * jac[:, width, :]).reshape(b, s, 1, 1)
            dA = ds * R.reshape(b, 1, s, s) + dR * scale.reshape(b, 1, 1, 1)
            du = jac[:, width + 1 :, :]
        return _HeadOutput(A, raw[:, width + 1 :], dA, du)
    raise ContractError(f"{variant} has no affine head")


def _identity(batch: int, s: int) -> Array:
    return np.broadcast_to(np.eye(s), (batch, s, s)).copy()


# Models


class MotionModel(ABC):
    """A motion field: a variant tag, its parameters and a time range."""

    variant: Variant
    spatial_dim: int
    t_min: float
    t_max: float

    @abstractmethod
    def parameters(self) -> list[Tensor]:
        """Trainable leaves in a fixed order."""

    @abstractmethod
    def warp(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        """Warp canonical points to normalized time(s) t_norm (scalar or one per row)."""

    @abstractmethod
    def param_count(self) -> int:
        """Weight entries, the model-size convention used in reports."""

    @property
    def supports_jacobian(self) -> bool:
        return False

    def motion_jacobian(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> Tensor:
        raise ContractError(f"{self.variant} does not provide a motion Jacobian")

    def field_gradients(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> tuple[Tensor | None, Tensor]:
        raise ContractError(f"{self.variant} does not provide spatial gradients")

    def bias_count(self) -> int:
        return sum(p.size for p in self.parameters()) - self.param_count()

    def normalize_raw_time(self, t_raw: ArrayLike) -> Array:
        """Map raw time stamps in [t_min, t_max] to [-1, 1]."""
        span = self.t_max - self.t_min
        if span <= 0.0:
            raise ContractError(f"empty time range [{self.t_min}, {self.t_max}]")
        return -1.0 + 2.0 * (np.asarray(t_raw, dtype=np.float64) - self.t_min) / span


def _check_points(x: Tensor, spatial_dim: int) -> None:
    if x.ndim != 2 or x.shape[1] != spatial_dim:
        raise ContractError(f"points must be B x {spatial_dim}, got {x.shape}")


def time_column(t_norm: TimeLike, batch: int) -> Array:
    t = np.asarray(t_norm, dtype=np.float64)
    if t.ndim == 0:
        t = np.full(batch, float(t))
    t = t.reshape(-1)
    if t.shape[0] != batch:
        raise ContractError(f"expected {batch} time stamps, got {t.shape[0]}")
    if tn.is_checked() and np.any(np.abs(t) > 1.0):
        raise DomainError("normalized time outside [-1, 1]")
    return t.reshape(batch, 1)


@dataclass(eq=False)
class SirenMotionModel(MotionModel):
    """One spatiotemporal SIREN read through a variant head."""

    variant: Variant
    net: SirenParams
    spatial_dim: int = 3
    t_min: float = 0.0
    t_max: float = 1.0
    reshape_order: int = RESHAPE_ROW_MAJOR

    def __post_init__(self) -> None:
        self.variant = Variant(self.variant)
        expected = siren.output_dim(self.variant, self.spatial_dim)
        if self.variant is Variant.DPF or self.net.out_dim != expected:
            raise ContractError(
                f"{self.variant} needs a network with {expected} outputs, got {self.net.out_dim}"
            )
        if self.net.in_dim != self.spatial_dim + 1 or not self.net.time_input:
            raise ContractError("a spatiotemporal field takes [x; t] as input")

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def param_count(self) -> int:
        return self.net.weight_count()

    @property
    def supports_jacobian(self) -> bool:
        return True

    def queries(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        tx = tn.as_tensor(x)
        _check_points(tx, self.spatial_dim)
        return tn.concat([tx, time_column(t_norm, tx.shape[0])], axis=1)

    def evaluate_map(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> AffineMap:
        q = self.queries(x, t_norm)
        head = _apply_head(self.variant, siren.forward(self.net, q), None, self.spatial_dim)
        A = head.A if head.A is not None else tn.constant(_identity(q.shape[0], self.spatial_dim))
        return AffineMap(A, head.u)

    def warp(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        tx = tn.as_tensor(x)
        q = self.queries(tx, t_norm)
        head = _apply_head(self.variant, siren.forward(self.net, q), None, self.spatial_dim)
        if head.A is None:
            return tx + head.u
        return AffineMap(head.A, head.u).apply(tx)

    def motion_jacobian(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> Tensor:
        """dy/dx = A + <dA, x> + du as a B x S x S tensor."""
        tx = tn.as_tensor(x)
        q = self.queries(tx, t_norm)
        raw, jac = siren.output_and_jacobian(self.net, q, method)
        head = _apply_head(self.variant, raw, jac, self.spatial_dim)
        return _assemble_jacobian(head, tx.data, self.spatial_dim)

    def field_gradients(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> tuple[Tensor | None, Tensor]:
        """Spatial gradients (dA, du) of the two fields; dA is None when A is constant."""
        q = self.queries(x, t_norm)
        raw, jac = siren.output_and_jacobian(self.net, q, method)
        head = _apply_head(self.variant, raw, jac, self.spatial_dim)
        assert head.du is not None
        return head.dA, head.du


def _assemble_jacobian(head: _HeadOutput, x: Array, s: int) -> Tensor:
    b = x.shape[0]
    assert head.du is not None
    if head.A is None:
        return head.du + _identity(b, s)
    jac = head.A + head.du
    if head.dA is not None:
        # <dA, x>[i, k] = sum_j dA[k][i, j] x_j
        contracted = (head.dA @ x.reshape(b, 1, s, 1)).reshape(b, s, s)
        jac = jac + contracted.transpose(0, 2, 1)
    return jac


def per_frame(x: Tensor, t_norm: TimeLike, n_frames: int, fn: _FrameFn) -> Tensor:
    """Apply fn(frame, rows) to the rows of x grouped by frame, restoring row order.

    Raises:
        ContractError: If a time stamp does not fall on a frame.
    """
    frames = frame_index(time_column(t_norm, x.shape[0]).reshape(-1), n_frames)
    unique = np.unique(frames)
    if unique.size == 1:
        return fn(int(unique[0]), x)
    parts: list[Tensor] = []
    order: list[Array] = []
    for k in unique:
        rows = np.flatnonzero(frames == k)
        parts.append(fn(int(k), x[rows]))
        order.append(rows)
    inverse = np.argsort(np.concatenate(order), kind="stable")
    return tn.concat(parts, axis=0)[inverse]


@dataclass(eq=False)
class DpfMotionModel(MotionModel):
    """Per-frame deformation fields y = x + u_k(x), one network per non-canonical frame."""

    nets: list[SirenParams]
    spatial_dim: int = 3
    t_min: float = 0.0
    t_max: float = 1.0
    variant: Variant = field(default=Variant.DPF, init=False)

    def __post_init__(self) -> None:
        if not self.nets:
            raise ContractError("per-frame DPF needs at least 2 frames")
        for net in self.nets:
            if net.time_input or net.in_dim != self.spatial_dim or net.out_dim != self.spatial_dim:
                raise ContractError("per-frame networks map x to a displacement of the same size")

    @property
    def n_frames(self) -> int:
        return len(self.nets) + 1

    def parameters(self) -> list[Tensor]:
        return [p for net in self.nets for p in net.parameters()]

    def param_count(self) -> int:
        return sum(net.weight_count() for net in self.nets)

    @property
    def supports_jacobian(self) -> bool:
        return True

    def warp(self, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
        tx = tn.as_tensor(x)
        _check_points(tx, self.spatial_dim)

        def frame_warp(k: int, pts: Tensor) -> Tensor:
            if k == 0:
                return pts
            return pts + siren.forward(self.nets[k - 1], pts)

        return per_frame(tx, t_norm, self.n_frames, frame_warp)

    def motion_jacobian(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> Tensor:
        tx = tn.as_tensor(x)
        _check_points(tx, self.spatial_dim)
        s = self.spatial_dim

        def frame_jacobian(k: int, pts: Tensor) -> Tensor:
            eye = _identity(pts.shape[0], s)
            if k == 0:
                return tn.constant(eye)
            _, jac = siren.output_and_jacobian(self.nets[k - 1], pts, method)
            return jac + eye

        return per_frame(tx, t_norm, self.n_frames, frame_jacobian)

    def field_gradients(
        self, x: Tensor | ArrayLike, t_norm: TimeLike, method: JacobianMethod = "analytical"
    ) -> tuple[Tensor | None, Tensor]:
        eye = _identity(tn.as_tensor(x).shape[0], self.spatial_dim)
        return None, self.motion_jacobian(x, t_norm, method) - eye


# Module-level operations


def evaluate_map(m: MotionModel, x: Tensor | ArrayLike, t_norm: TimeLike) -> AffineMap:
    """Per-point affine maps of a SIREN-backed field at normalized time(s) t_norm."""
    if not isinstance(m, SirenMotionModel):
        raise ContractError(f"{m.variant} is not an affine-head field")
    return m.evaluate_map(x, t_norm)


def warp(m: MotionModel, x: Tensor | ArrayLike, t_norm: TimeLike) -> Tensor:
    return m.warp(x, t_norm)


def motion_jacobian(
    m: MotionModel,
    x: Tensor | ArrayLike,
    t_norm: TimeLike,
    method: JacobianMethod = "analytical",
) -> Tensor:
    return m.motion_jacobian(x, t_norm, method)


def build_siren_model(
    variant: Variant,
    d: int = DEFAULT_HIDDEN,
    n: int = DEFAULT_LAYERS,
    spatial_dim: int = 3,
    n_frames: int = 2,
    seed: int = 0,
    omega_first: float = DEFAULT_OMEGA,
) -> MotionModel:
    """Construct a freshly initialized SIREN field (or per-frame DPF) for a sequence.

    Args:
        variant: One of the SIREN-backed variants.
        d: Hidden width.
        n: Number of hidden layers.
        spatial_dim: 2 or 3.
        n_frames: Number of frames T in the sequence; time spans frames 0..T-1.
        seed: Initialization seed; per-frame DPF networks use seed + k.
        omega_first: First-layer frequency scale.

    Returns:
        The initialized model.
    """
    variant = Variant(variant)
    out = siren.output_dim(variant, spatial_dim)
    t_max = float(max(n_frames - 1, 1))
    if variant is Variant.DPF:
        if n_frames < 2:
            raise ContractError(f"per-frame DPF needs at least 2 frames, got {n_frames}")
        nets = [
            siren.init_siren(spatial_dim, d, n, out, omega_first, seed + k, time_input=False)
            for k in range(n_frames - 1)
        ]
        return DpfMotionModel(nets, spatial_dim, 0.0, t_max)
    net = siren.init_siren(spatial_dim + 1, d, n, out, omega_first, seed)
    return SirenMotionModel(variant, net, spatial_dim, 0.0, t_max)


def affinity_from_translation(m: SirenMotionModel) -> SirenMotionModel:
    """Embed a Trans field in an Affinity field whose A-head is identically I."""
    if m.variant is not Variant.TRANS:
        raise ContractError(f"expected a trans field, got {m.variant}")
    src = m.net
    s = m.spatial_dim
    net = SirenParams(
        src.in_dim, src.hidden_dim, src.n_hidden, s * s + s, src.omega_first, src.time_input
    )
    for w, b in zip(src.weights[:-1], src.biases[:-1], strict=True):
        net.weights.append(tn.parameter(w.data.copy()))
        net.biases.append(tn.parameter(b.data.copy()))
    w_out = np.zeros((s * s + s, src.hidden_dim))
    w_out[s * s :] = src.weights[-1].data
    b_out = np.zeros(s * s + s)
    b_out[s * s :] = src.biases[-1].data
    net.weights.append(tn.parameter(w_out))
    net.biases.append(tn.parameter(b_out))
    return SirenMotionModel(Variant.AFFINITY, net, s, m.t_min, m.t_max, m.reshape_order)
