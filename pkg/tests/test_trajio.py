"""Tests for trajectory sets and the DTRJ container."""

import struct
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from motionfield.config import MotionKind
from motionfield.data import trajio
from motionfield.data.synth import gen_elemental
from motionfield.data.trajio import TrajectorySet
from motionfield.errors import ContractError, FormatError


@pytest.fixture
def trajectories() -> TrajectorySet:
    return gen_elemental(MotionKind.ROTATION, n_points=20, n_frames=4, seed=1)


def _hand_built() -> bytes:
    header = struct.pack("<4sIIIBB6x", b"DTRJ", 1, 2, 2, 3, 0)
    canonical = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]], dtype="<f4")
    times = np.array([-1.0, 1.0], dtype="<f4")
    targets = np.stack([canonical, canonical + 0.5]).astype("<f4")
    return header + canonical.tobytes() + times.tobytes() + targets.tobytes() + bytes([1, 0])


def test_decode_hand_built_file() -> None:
    ts = trajio.decode_trajectories(_hand_built())
    assert (ts.n_points, ts.n_frames, ts.dim) == (2, 2, 3)
    np.testing.assert_array_equal(ts.canonical[1], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(ts.targets[1, 0], [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(ts.split_mask, [True, False])
    np.testing.assert_array_equal(ts.train_indices, [0])
    np.testing.assert_array_equal(ts.test_indices, [1])


def test_encoding_is_stable_after_one_round_trip(trajectories: TrajectorySet) -> None:
    """Values pass through f32 once; encoding the decoded set reproduces the bytes."""
    data = trajio.encode_trajectories(trajectories)
    decoded = trajio.decode_trajectories(data)
    np.testing.assert_array_equal(decoded.targets, trajectories.targets.astype(np.float32))
    np.testing.assert_array_equal(decoded.split_mask, trajectories.split_mask)
    assert trajio.encode_trajectories(decoded) == data
    assert len(data) == trajio.HEADER_SIZE + 4 * (20 * 3 + 4 + 4 * 20 * 3) + 20


def test_save_and_load(tmp_path: Path, trajectories: TrajectorySet) -> None:
    path = tmp_path / "seq.dtrj"
    trajio.save_trajectories(trajectories, path)
    loaded = trajio.load_trajectories(path)
    np.testing.assert_allclose(loaded.canonical, trajectories.canonical, atol=1e-6)


@pytest.mark.parametrize(
    ("patch", "offset"),
    [
        (lambda b: b"XTRJ" + b[4:], 0),
        (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], 4),
        (lambda b: b[:16] + bytes([4]) + b[17:], 16),
        (lambda b: b[:17] + bytes([5]) + b[18:], 17),
        (lambda b: b[:-1] + bytes([2]), len(_hand_built()) - 1),
        (lambda b: b + b"\x00", len(_hand_built())),
        (lambda b: b[:10], 10),
        (lambda b: b[:30], 24),
    ],
)
def test_format_errors_carry_the_offset(patch: Callable[[bytes], bytes], offset: int) -> None:
    data = patch(_hand_built())
    with pytest.raises(FormatError) as excinfo:
        trajio.decode_trajectories(data)
    assert excinfo.value.offset == offset


def test_inconsistent_contents_are_format_errors() -> None:
    data = bytearray(_hand_built())
    # second frame time of -1 breaks the strictly increasing order
    struct.pack_into("<f", data, 24 + 24 + 4, -1.0)
    with pytest.raises(FormatError):
        trajio.decode_trajectories(bytes(data))


def test_trajectory_set_validation() -> None:
    x = np.zeros((3, 3))
    targets = np.stack([x, x + 1.0])
    mask = np.ones(3, dtype=bool)
    with pytest.raises(ContractError):
        TrajectorySet(x, [-1.0, 0.5], targets, mask)
    with pytest.raises(ContractError):
        TrajectorySet(x, [-1.0, 1.0], targets + 1.0, mask)
    with pytest.raises(ContractError):
        TrajectorySet(x, [-1.0, 1.0], targets, mask[:2])
    with pytest.raises(ContractError):
        TrajectorySet(x, [-1.0, 1.0], targets[:, :2], mask)
    with pytest.raises(ContractError):
        TrajectorySet(np.zeros((3, 4)), [-1.0, 1.0], np.zeros((2, 3, 4)), mask)


def test_subset_marks_everything_train(trajectories: TrajectorySet) -> None:
    sub = trajectories.subset([0, 3, 5])
    assert sub.n_points == 3
    assert sub.train_indices.size == 3
    np.testing.assert_array_equal(sub.targets, trajectories.targets[:, [0, 3, 5]])
