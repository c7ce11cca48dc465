"""Synthetic sequences, trajectory files and experiment presets."""

from motionfield.data.synth import (
    AlignmentSequence,
    elemental_transform,
    extract_clips,
    gen_alignment_sequence,
    gen_elemental,
    gen_image2d,
)
from motionfield.data.trajio import (
    TrajectorySet,
    decode_trajectories,
    encode_trajectories,
    load_trajectories,
    save_trajectories,
)

__all__ = [
    "AlignmentSequence",
    "TrajectorySet",
    "decode_trajectories",
    "elemental_transform",
    "encode_trajectories",
    "extract_clips",
    "gen_alignment_sequence",
    "gen_elemental",
    "gen_image2d",
    "load_trajectories",
    "save_trajectories",
]
