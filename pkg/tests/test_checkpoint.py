"""Tests for the DOMA checkpoint container."""

import struct
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from motionfield.config import SirenArch, Variant
from motionfield.core.api import build_model
from motionfield.core.motion import MotionModel, SirenMotionModel, build_siren_model
from motionfield.errors import FormatError
from motionfield.storage import checkpoint

ALL_VARIANTS = [
    Variant.TRANS,
    Variant.SE3,
    Variant.SCALED_SE3,
    Variant.AFFINITY,
    Variant.DPF,
    Variant.RELU_PE,
    Variant.BONECLOUD,
]


def _small(variant: Variant, spatial_dim: int = 3) -> MotionModel:
    points = np.random.default_rng(0).uniform(-1.0, 1.0, size=(20, spatial_dim))
    m = build_model(variant, spatial_dim, 4, SirenArch(8, 1), seed=1, points=points)
    return checkpoint.quantize(m)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_round_trip_is_byte_identical(variant: Variant) -> None:
    """A quantized model survives save, load and save unchanged."""
    m = _small(variant)
    data = checkpoint.encode_checkpoint(m)
    loaded = checkpoint.decode_checkpoint(data)
    assert loaded.variant is variant
    assert checkpoint.encode_checkpoint(loaded) == data
    assert loaded.param_count() == m.param_count()
    x = np.random.default_rng(3).uniform(-1.0, 1.0, size=(5, 3))
    np.testing.assert_array_equal(loaded.warp(x, 1.0).data, m.warp(x, 1.0).data)


@pytest.mark.parametrize("variant", [Variant.AFFINITY, Variant.SE3, Variant.BONECLOUD])
def test_planar_models_round_trip(variant: Variant) -> None:
    m = _small(variant, spatial_dim=2)
    loaded = checkpoint.decode_checkpoint(checkpoint.encode_checkpoint(m))
    assert loaded.spatial_dim == 2
    assert checkpoint.encode_checkpoint(loaded) == checkpoint.encode_checkpoint(m)


def test_reference_sizes() -> None:
    """Checkpoint sizes of the reference fields in bytes and decimal kilobytes."""
    affinity = build_siren_model(Variant.AFFINITY, 128, 3)
    assert checkpoint.checkpoint_size(affinity) == 206964
    assert checkpoint.checkpoint_size(affinity) / checkpoint.KB == pytest.approx(207.0, abs=0.05)
    trans = build_siren_model(Variant.TRANS, 128, 2)
    assert checkpoint.checkpoint_size(trans) == 136272


def test_size_is_header_plus_arch_plus_f32_parameters() -> None:
    m = build_siren_model(Variant.SE3, 16, 2)
    total = sum(p.size for p in m.parameters())
    assert checkpoint.checkpoint_size(m) == checkpoint.HEADER_SIZE + 24 + 4 * total


def test_quantize_rounds_to_single_precision() -> None:
    m = build_siren_model(Variant.TRANS, 8, 1)
    m.parameters()[0].data[0, 0] = 0.1
    checkpoint.quantize(m)
    assert m.parameters()[0].data[0, 0] == float(np.float32(0.1))


def test_save_and_load(tmp_path: Path) -> None:
    m = _small(Variant.AFFINITY)
    path = tmp_path / "model.doma"
    size = checkpoint.save_checkpoint(m, path)
    assert size == path.stat().st_size
    loaded = checkpoint.load_checkpoint(path)
    assert loaded.t_max == m.t_max == 3.0


def _patched(data: bytes, offset: int, value: bytes) -> bytes:
    return data[:offset] + value + data[offset + len(value) :]


@pytest.mark.parametrize(
    ("edit", "offset"),
    [
        (lambda b: _patched(b, 0, b"AMOD"), 0),
        (lambda b: _patched(b, 4, struct.pack("<I", 9)), 4),
        (lambda b: _patched(b, 8, bytes([42])), 8),
        (lambda b: _patched(b, 9, bytes([4])), 9),
        (lambda b: _patched(b, 10, bytes([1])), 10),
        (lambda b: _patched(b, 28, struct.pack("<Q", 1)), 28),
        (lambda b: b[:20], 0),
        (lambda b: b + b"\x00\x00", None),
        (lambda b: b[:-2], None),
    ],
)
def test_format_errors_carry_the_offset(
    edit: Callable[[bytes], bytes], offset: int | None
) -> None:
    data = checkpoint.encode_checkpoint(_small(Variant.AFFINITY))
    bad = edit(data)
    with pytest.raises(FormatError) as excinfo:
        checkpoint.decode_checkpoint(bad)
    if offset is not None:
        assert excinfo.value.offset == offset
    assert "offset" in str(excinfo.value)


def test_inconsistent_body_is_a_format_error() -> None:
    m = _small(Variant.AFFINITY)
    data = bytearray(checkpoint.encode_checkpoint(m))
    # the arch block claims 5 outputs where an affinity head needs 12
    struct.pack_into("<I", data, checkpoint.HEADER_SIZE + 12, 5)
    with pytest.raises(FormatError) as excinfo:
        checkpoint.decode_checkpoint(bytes(data))
    assert excinfo.value.offset >= checkpoint.HEADER_SIZE


def test_oversized_dimensions_are_a_format_error() -> None:
    """Dimensions whose product overflows 64 bits read as a truncated layer."""
    data = bytearray(checkpoint.encode_checkpoint(_small(Variant.RELU_PE)))
    struct.pack_into("<II", data, checkpoint.HEADER_SIZE, 0xFFFFFFFF, 0xFFFFFFFF)
    with pytest.raises(FormatError) as excinfo:
        checkpoint.decode_checkpoint(bytes(data))
    assert excinfo.value.offset >= checkpoint.HEADER_SIZE


def test_quantized_frequency_survives_a_round_trip() -> None:
    m = checkpoint.quantize(build_siren_model(Variant.TRANS, 8, 1, omega_first=30.1))
    assert isinstance(m, SirenMotionModel)
    assert m.net.omega_first == float(np.float32(30.1))
    loaded = checkpoint.decode_checkpoint(checkpoint.encode_checkpoint(m))
    assert isinstance(loaded, SirenMotionModel)
    assert loaded.net.omega_first == m.net.omega_first
