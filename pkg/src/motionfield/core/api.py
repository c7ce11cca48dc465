"""High-level entry points: presets, model construction and model summaries.

This module is what the CLI and notebooks call; everything below it can be
used directly for finer control.
"""

from __future__ import annotations

from typing import Any, Literal, TypedDict, cast

from numpy.typing import ArrayLike

from motionfield.config import SirenArch, Variant
from motionfield.core.baselines import (
    BONE_COUNT,
    BONE_SIGMA,
    PE_LEVELS,
    RELU_HIDDEN,
    RELU_LAYERS,
    BoneCloudMotionModel,
    ReluMotionModel,
    build_bonecloud_model,
    build_relu_model,
)
from motionfield.core.motion import (
    DpfMotionModel,
    MotionModel,
    SirenMotionModel,
    build_siren_model,
)
from motionfield.data.presets import ALIGNMENT, ELEMENTAL, FLUID, HIDDEN256, IMAGE2D
from motionfield.errors import ContractError, UsageError
from motionfield.storage.checkpoint import KB, checkpoint_size

PresetName = Literal["elemental", "image2d", "alignment", "fluid", "hidden256"]


class PresetInfo(TypedDict):
    """One experiment preset."""

    title: str
    description: str
    data: dict[str, Any]
    model: dict[str, Any]
    train: dict[str, Any]
    runs: list[dict[str, str]]
    notes: list[str]


class ModelInfo(TypedDict):
    """What `info` reports about a model."""

    variant: str
    spatial_dim: int
    architecture: str
    params: int
    biases: int
    checkpoint_bytes: int
    checkpoint_kb: float


_PRESETS_MAP: dict[PresetName, Any] = {
    "elemental": ELEMENTAL,
    "image2d": IMAGE2D,
    "alignment": ALIGNMENT,
    "fluid": FLUID,
    "hidden256": HIDDEN256,
}

# CLI spellings that are not Variant values: the plain ReLU MLP and its
# positionally encoded form.
VARIANT_ALIASES: dict[str, tuple[Variant, int]] = {
    "relu": (Variant.RELU_PE, 0),
    "relu-pe6": (Variant.RELU_PE, PE_LEVELS),
}


def list_presets() -> list[tuple[PresetName, str]]:
    """Get all presets with their titles.

    Returns:
        A list of (preset_name, title) tuples.
    """
    return [(name, data["title"]) for name, data in _PRESETS_MAP.items()]


def get_preset(name: str) -> PresetInfo:
    """Get the settings of a named preset.

    Raises:
        ContractError: If the preset doesn't exist.
    """
    if name not in _PRESETS_MAP:
        raise ContractError(f"Unknown preset: {name}")
    return cast(PresetInfo, _PRESETS_MAP[cast(PresetName, name)])


def search_presets(query: str) -> list[tuple[PresetName, str, str]]:
    """Find presets whose title, description or notes mention query (case-insensitive)."""
    results: list[tuple[PresetName, str, str]] = []
    query = query.lower()
    for name, data in _PRESETS_MAP.items():
        for key in ("title", "description"):
            if query in data[key].lower():
                results.append((name, key, data[key]))
        for note in data["notes"]:
            if query in note.lower():
                results.append((name, "note", note))
    return results


def parse_variant(name: str) -> tuple[Variant, int]:
    """Resolve a CLI variant name to (variant, positional encoding levels).

    Raises:
        UsageError: If the name is not a known variant.
    """
    if name in VARIANT_ALIASES:
        return VARIANT_ALIASES[name]
    try:
        variant = Variant(name)
    except ValueError:
        known = sorted({*(v.value for v in Variant), *VARIANT_ALIASES})
        raise UsageError(f"unknown variant {name!r}; expected one of {', '.join(known)}") from None
    return variant, PE_LEVELS if variant is Variant.RELU_PE else 0


def build_model(
    variant: Variant | str,
    spatial_dim: int = 3,
    n_frames: int = 2,
    arch: SirenArch | None = None,
    seed: int = 0,
    points: ArrayLike | None = None,
    pe_levels: int | None = None,
) -> MotionModel:
    """Build a freshly initialized model of any variant for a T-frame sequence.

    Args:
        variant: A Variant or CLI variant name.
        spatial_dim: 2 or 3.
        n_frames: Frames in the sequence.
        arch: SIREN architecture; the ReLU baseline uses its own defaults unless
            arch is given.
        seed: Initialization seed.
        points: Canonical points; BoneCloud places its bones in their bounding box.
        pe_levels: Positional encoding levels of the ReLU baseline.

    Raises:
        ContractError: If BoneCloud is requested without points.
    """
    resolved, default_levels = parse_variant(str(variant))
    if resolved is Variant.RELU_PE:
        hidden = arch.hidden_dim if arch is not None else RELU_HIDDEN
        layers = arch.n_hidden if arch is not None else RELU_LAYERS
        levels = default_levels if pe_levels is None else pe_levels
        return build_relu_model(spatial_dim, n_frames, hidden, layers, levels, seed)
    if resolved is Variant.BONECLOUD:
        if points is None:
            raise ContractError("BoneCloud needs canonical points to place its bones")
        return build_bonecloud_model(points, n_frames, BONE_COUNT, BONE_SIGMA, seed)
    arch = arch or SirenArch()
    return build_siren_model(
        resolved, arch.hidden_dim, arch.n_hidden, spatial_dim, n_frames, seed, arch.omega_first
    )


def describe_architecture(m: MotionModel) -> str:
    if isinstance(m, SirenMotionModel):
        net = m.net
        return f"siren in={net.in_dim} d={net.hidden_dim} n={net.n_hidden} out={net.out_dim}"
    if isinstance(m, DpfMotionModel):
        net = m.nets[0]
        return f"{len(m.nets)} x siren in={net.in_dim} d={net.hidden_dim} n={net.n_hidden}"
    if isinstance(m, ReluMotionModel):
        p = m.params
        return f"relu d={p.hidden_dim} n={p.n_hidden} pe={p.pe_levels}"
    if isinstance(m, BoneCloudMotionModel):
        return f"bones K={m.params.n_bones} T={m.params.n_frames} sigma={m.params.sigma:g}"
    return type(m).__name__


def model_info(m: MotionModel) -> ModelInfo:
    """Variant, architecture, parameter counts and checkpoint size of a model."""
    size = checkpoint_size(m)
    return {
        "variant": str(m.variant),
        "spatial_dim": m.spatial_dim,
        "architecture": describe_architecture(m),
        "params": m.param_count(),
        "biases": m.bias_count(),
        "checkpoint_bytes": size,
        "checkpoint_kb": size / KB,
    }
