"""The DOMA checkpoint container.

Layout (little-endian, parameters as row-major f32):

    header   magic b"DOMA", u32 version, u8 variant code, u8 spatial dim,
             u8 A-reshape order, pad, f64 t_min, f64 t_max,
             u64 weight count, u64 bias count
    body     siren fields   arch block, then W and b of every layer
             dpf            u32 frame count, one arch block, then the layers
                            of every per-frame network in frame order
             relu-pe        u32 in, d, n_hidden, out, pe_levels, then layers
             bonecloud      u32 K, u32 T, f32 sigma, bones (K x S),
                            rotations (T x K x 6|2), translations (T x K x S)

An arch block is u32 in_dim, d, n_hidden, out_dim, f32 omega_first,
u8 time input, 3 pad bytes.
"""

from __future__ import annotations

import logging
import math
import struct
from pathlib import Path
from typing import Any

import numpy as np

from motionfield.config import Variant
from motionfield.core import tensor as tn
from motionfield.core.baselines import (
    BoneCloudMotionModel,
    BoneCloudParams,
    ReluMotionModel,
    ReluPEParams,
)
from motionfield.core.motion import DpfMotionModel, MotionModel, SirenMotionModel
from motionfield.core.siren import SirenParams
from motionfield.core.tensor import Array, Tensor
from motionfield.errors import ContractError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b"DOMA"
VERSION = 1
KB = 1000

_HEADER = struct.Struct("<4sIBBBxddQQ")
_ARCH = struct.Struct("<IIIIfB3x")
_COUNT = struct.Struct("<I")
_RELU = struct.Struct("<IIIII")
_BONES = struct.Struct("<IIf")
HEADER_SIZE = _HEADER.size

VARIANT_CODES: dict[Variant, int] = {
    Variant.TRANS: 0,
    Variant.SE3: 1,
    Variant.SCALED_SE3: 2,
    Variant.AFFINITY: 3,
    Variant.DPF: 4,
    Variant.RELU_PE: 5,
    Variant.BONECLOUD: 6,
}
_CODE_VARIANTS = {code: variant for variant, code in VARIANT_CODES.items()}


def _single(value: float) -> float:
    return float(np.float32(value))


def quantize(m: MotionModel) -> MotionModel:
    """Round every parameter and stored scale to f32 in place, so metrics match the saved model."""
    for p in m.parameters():
        p.data[...] = p.data.astype(np.float32).astype(np.float64)
    if isinstance(m, SirenMotionModel):
        m.net.omega_first = _single(m.net.omega_first)
    elif isinstance(m, DpfMotionModel):
        for net in m.nets:
            net.omega_first = _single(net.omega_first)
    elif isinstance(m, BoneCloudMotionModel):
        m.params.sigma = _single(m.params.sigma)
    return m


# Encoding


def _f32(t: Tensor) -> bytes:
    return t.data.astype("<f4").tobytes()


def _arch(net: SirenParams) -> bytes:
    return _ARCH.pack(
        net.in_dim, net.hidden_dim, net.n_hidden, net.out_dim, net.omega_first, net.time_input
    )


def _layers(tensors: list[Tensor]) -> list[bytes]:
    return [_f32(t) for t in tensors]


def encode_checkpoint(m: MotionModel) -> bytes:
    reshape_order = m.reshape_order if isinstance(m, SirenMotionModel) else 0
    parts = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            VARIANT_CODES[m.variant],
            m.spatial_dim,
            reshape_order,
            m.t_min,
            m.t_max,
            m.param_count(),
            m.bias_count(),
        )
    ]
    if isinstance(m, SirenMotionModel):
        parts.append(_arch(m.net))
        parts += _layers(m.net.parameters())
    elif isinstance(m, DpfMotionModel):
        parts += [_COUNT.pack(m.n_frames), _arch(m.nets[0])]
        for net in m.nets:
            parts += _layers(net.parameters())
    elif isinstance(m, ReluMotionModel):
        p = m.params
        parts.append(_RELU.pack(p.in_dim, p.hidden_dim, p.n_hidden, p.out_dim, p.pe_levels))
        parts += _layers(p.parameters())
    elif isinstance(m, BoneCloudMotionModel):
        b = m.params
        parts.append(_BONES.pack(b.n_bones, b.n_frames, b.sigma))
        parts += _layers(b.parameters())
    else:
        raise ContractError(f"no checkpoint layout for {type(m).__name__}")
    return b"".join(parts)


# Decoding


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def unpack(self, layout: struct.Struct, what: str) -> tuple[Any, ...]:
        if self.offset + layout.size > len(self.data):
            raise FormatError(f"truncated {what}", self.offset)
        values = layout.unpack_from(self.data, self.offset)
        self.offset += layout.size
        return values

    def array(self, shape: tuple[int, ...], what: str) -> Array:
        count = math.prod(int(extent) for extent in shape)
        end = self.offset + 4 * count
        if end > len(self.data):
            raise FormatError(f"truncated {what}", self.offset)
        raw = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.offset)
        self.offset = end
        return raw.astype(np.float64).reshape(shape)

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{len(self.data) - self.offset} trailing bytes", self.offset)


def _read_arch(r: _Reader) -> SirenParams:
    start = r.offset
    in_dim, d, n, out, omega, time_input = r.unpack(_ARCH, "architecture block")
    if min(in_dim, d, n, out) < 1 or time_input > 1:
        raise FormatError("invalid architecture block", start)
    return SirenParams(in_dim, d, n, out, omega, bool(time_input))


def _read_layers(r: _Reader, shapes: list[tuple[int, int]]) -> tuple[list[Tensor], list[Tensor]]:
    weights: list[Tensor] = []
    biases: list[Tensor] = []
    for i, shape in enumerate(shapes):
        weights.append(tn.parameter(r.array(shape, f"weights of layer {i}")))
        biases.append(tn.parameter(r.array((shape[0],), f"biases of layer {i}")))
    return weights, biases


def _siren_shapes(net: SirenParams) -> list[tuple[int, int]]:
    d = net.hidden_dim
    return [(d, net.in_dim)] + [(d, d)] * net.n_hidden + [(net.out_dim, d)]


def _read_siren(r: _Reader, net: SirenParams) -> SirenParams:
    filled = SirenParams(
        net.in_dim, net.hidden_dim, net.n_hidden, net.out_dim, net.omega_first, net.time_input
    )
    filled.weights, filled.biases = _read_layers(r, _siren_shapes(net))
    return filled


def decode_checkpoint(data: bytes) -> MotionModel:
    """Parse a DOMA byte string back into a model.

    Raises:
        FormatError: On a bad magic, version or variant code, truncation,
            inconsistent counts or trailing bytes; the message carries the offset.
    """
    r = _Reader(data)
    magic, version, code, s, order, t_min, t_max, n_weights, n_biases = r.unpack(
        _HEADER, "header"
    )
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if code not in _CODE_VARIANTS:
        raise FormatError(f"unknown variant code {code}", 8)
    if s not in (2, 3):
        raise FormatError(f"spatial dimension must be 2 or 3, got {s}", 9)
    if order != 0:
        raise FormatError(f"unknown A-reshape order {order}", 10)
    variant = _CODE_VARIANTS[code]
    body = r.offset
    try:
        m = _decode_body(r, variant, s, t_min, t_max)
    except ContractError as exc:
        raise FormatError(f"inconsistent {variant} body ({exc})", body) from exc
    r.finish()
    if (m.param_count(), m.bias_count()) != (n_weights, n_biases):
        raise FormatError(
            f"header counts {n_weights}/{n_biases} disagree with the stored layers", 28
        )
    return m


def _decode_body(r: _Reader, variant: Variant, s: int, t_min: float, t_max: float) -> MotionModel:
    if variant.is_siren_field:
        net = _read_siren(r, _read_arch(r))
        return SirenMotionModel(variant, net, s, t_min, t_max)
    if variant is Variant.DPF:
        (n_frames,) = r.unpack(_COUNT, "frame count")
        if n_frames < 2:
            raise ContractError(f"per-frame DPF needs at least 2 frames, got {n_frames}")
        arch = _read_arch(r)
        nets = [_read_siren(r, arch) for _ in range(n_frames - 1)]
        return DpfMotionModel(nets, s, t_min, t_max)
    if variant is Variant.RELU_PE:
        in_dim, d, n, out, levels = r.unpack(_RELU, "ReLU block")
        if min(in_dim, d, n, out) < 1:
            raise ContractError("invalid ReLU MLP shape")
        params = ReluPEParams(in_dim, d, n, out, levels)
        first = in_dim + 2 * levels * in_dim
        shapes = [(d, first)] + [(d, d)] * (n - 1) + [(out, d)]
        params.weights, params.biases = _read_layers(r, shapes)
        return ReluMotionModel(params, s, t_min, t_max)
    k, n_frames, sigma = r.unpack(_BONES, "bone block")
    width = 6 if s == 3 else 2
    bones = tn.parameter(r.array((k, s), "bones"))
    rotations = tn.parameter(r.array((n_frames, k, width), "bone rotations"))
    translations = tn.parameter(r.array((n_frames, k, s), "bone translations"))
    rig = BoneCloudParams(bones, rotations, translations, sigma)
    return BoneCloudMotionModel(rig, t_min, t_max)


# Files


def save_checkpoint(m: MotionModel, path: str | Path) -> int:
    """Write m and return the number of bytes written."""
    data = encode_checkpoint(m)
    Path(path).write_bytes(data)
    logger.debug("saved %s checkpoint: %d bytes", m.variant, len(data))
    return len(data)


def load_checkpoint(path: str | Path) -> MotionModel:
    return decode_checkpoint(Path(path).read_bytes())


def checkpoint_size(m: MotionModel) -> int:
    return len(encode_checkpoint(m))
