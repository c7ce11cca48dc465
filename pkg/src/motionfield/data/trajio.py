"""Trajectory sets and the DTRJ binary container.

Layout (little-endian):

    offset  size          field
    0       4             magic b"DTRJ"
    4       4             u32 version (1)
    8       4             u32 N points
    12      4             u32 T frames
    16      1             u8 dim (2 or 3)
    17      1             u8 canonical frame index
    18      6             zero padding
    24      4*N*dim       canonical positions, f32
    ...     4*T           normalized times, f32
    ...     4*T*N*dim     per-frame positions, f32
    ...     N             split mask, u8 (1 = train, 0 = test)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from motionfield.core.tensor import Array
from motionfield.errors import ContractError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b"DTRJ"
VERSION = 1
_HEADER = struct.Struct("<4sIIIBB6x")
HEADER_SIZE = _HEADER.size
TIME_TOL = 1e-6
CANONICAL_TOL = 1e-6


@dataclass(eq=False)
class TrajectorySet:
    """Canonical points, their positions at every frame, and a train/test split."""

    canonical: Array
    times: Array
    targets: Array
    split_mask: NDArray[np.bool_]
    canonical_index: int = 0

    def __post_init__(self) -> None:
        self.canonical = np.asarray(self.canonical, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.split_mask = np.asarray(self.split_mask, dtype=bool).reshape(-1)
        self.validate()

    def validate(self) -> None:
        n, t = self.canonical.shape[0], self.times.shape[0]
        if self.canonical.ndim != 2 or self.canonical.shape[1] not in (2, 3) or n == 0:
            raise ContractError(
                f"canonical points must be N x 2 or N x 3, got {self.canonical.shape}"
            )
        if t < 2:
            raise ContractError(f"a trajectory set needs at least 2 frames, got {t}")
        if self.targets.shape != (t, *self.canonical.shape):
            raise ContractError(
                f"targets must be {(t, *self.canonical.shape)}, got {self.targets.shape}"
            )
        if self.split_mask.shape != (n,):
            raise ContractError(f"split mask must have {n} entries, got {self.split_mask.shape}")
        if np.any(np.diff(self.times) <= 0.0):
            raise ContractError("frame times must be strictly increasing")
        if abs(self.times[0] + 1.0) > TIME_TOL or abs(self.times[-1] - 1.0) > TIME_TOL:
            raise ContractError("frame times must span [-1, 1]")
        if not 0 <= self.canonical_index < t:
            raise ContractError(f"canonical index {self.canonical_index} outside 0..{t - 1}")
        drift = np.abs(self.targets[self.canonical_index] - self.canonical).max()
        if drift > CANONICAL_TOL:
            raise ContractError("the canonical frame's targets must equal the canonical points")

    @property
    def n_points(self) -> int:
        return int(self.canonical.shape[0])

    @property
    def n_frames(self) -> int:
        return int(self.times.shape[0])

    @property
    def dim(self) -> int:
        return int(self.canonical.shape[1])

    @property
    def train_indices(self) -> NDArray[np.int64]:
        return np.flatnonzero(self.split_mask).astype(np.int64)

    @property
    def test_indices(self) -> NDArray[np.int64]:
        return np.flatnonzero(~self.split_mask).astype(np.int64)

    def subset(self, indices: ArrayLike) -> TrajectorySet:
        """Points at the given indices, all marked as train."""
        idx = np.asarray(indices, dtype=np.int64)
        return TrajectorySet(
            self.canonical[idx],
            self.times.copy(),
            self.targets[:, idx],
            np.ones(idx.shape[0], dtype=bool),
            self.canonical_index,
        )


def encode_trajectories(ts: TrajectorySet) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, ts.n_points, ts.n_frames, ts.dim, ts.canonical_index)
    return b"".join(
        [
            header,
            ts.canonical.astype("<f4").tobytes(),
            ts.times.astype("<f4").tobytes(),
            ts.targets.astype("<f4").tobytes(),
            ts.split_mask.astype(np.uint8).tobytes(),
        ]
    )


def decode_trajectories(data: bytes) -> TrajectorySet:
    """Parse a DTRJ byte string.

    Raises:
        FormatError: On a bad magic, version or dimension, a truncated section,
            an invalid split flag or trailing bytes; the message carries the offset.
    """
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", len(data))
    magic, version, n, t, dim, canonical_index = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dim not in (2, 3):
        raise FormatError(f"dimension must be 2 or 3, got {dim}", 16)
    if canonical_index >= t:
        raise FormatError(f"canonical index {canonical_index} outside {t} frames", 17)

    offset = HEADER_SIZE
    sections: list[Array] = []
    for name, count in (("canonical", n * dim), ("times", t), ("targets", t * n * dim)):
        end = offset + 4 * count
        if end > len(data):
            raise FormatError(f"truncated {name} section", offset)
        raw = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        sections.append(raw.astype(np.float64))
        offset = end
    if offset + n > len(data):
        raise FormatError("truncated split mask", offset)
    flags = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset)
    bad = np.flatnonzero(flags > 1)
    if bad.size:
        raise FormatError(f"split flag {flags[bad[0]]} is neither 0 nor 1", offset + int(bad[0]))
    if offset + n != len(data):
        raise FormatError(f"{len(data) - offset - n} trailing bytes", offset + n)

    canonical, times, targets = sections
    try:
        return TrajectorySet(
            canonical.reshape(n, dim),
            times,
            targets.reshape(t, n, dim),
            flags.astype(bool),
            int(canonical_index),
        )
    except ContractError as exc:
        raise FormatError(f"inconsistent contents ({exc})", HEADER_SIZE) from exc


def save_trajectories(ts: TrajectorySet, path: str | Path) -> None:
    Path(path).write_bytes(encode_trajectories(ts))


def load_trajectories(path: str | Path) -> TrajectorySet:
    p = Path(path)
    ts = decode_trajectories(p.read_bytes())
    logger.debug("loaded %s: %d points, %d frames", p.name, ts.n_points, ts.n_frames)
    return ts
