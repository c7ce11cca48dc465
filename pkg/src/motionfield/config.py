"""Configuration records, enumerations and defaults."""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal

from motionfield.errors import ContractError, UsageError


THREADS_ENV = "MOTIONFIELD_THREADS"


class Variant(StrEnum):
    """Motion model families; the value is the CLI/checkpoint tag."""

    TRANS = "trans"
    SE3 = "se3"
    SCALED_SE3 = "scaled-se3"
    AFFINITY = "affinity"
    DPF = "dpf"
    RELU_PE = "relu-pe"
    BONECLOUD = "bonecloud"

    @property
    def is_siren_field(self) -> bool:
        """True for the single-network spatiotemporal SIREN fields."""
        return self in _SIREN_FIELDS


_SIREN_FIELDS = frozenset({Variant.TRANS, Variant.SE3, Variant.SCALED_SE3, Variant.AFFINITY})


class RegMode(StrEnum):
    NONE = "none"
    H_ROBUST = "h"
    H_HOMOGENEOUS = "h-homog"
    ELASTIC = "e"
    AIAP = "a"
    AIAP_H = "ah"

    @property
    def uses_smoothness(self) -> bool:
        return self in (RegMode.H_ROBUST, RegMode.H_HOMOGENEOUS, RegMode.AIAP_H)

    @property
    def robust(self) -> bool:
        return self in (RegMode.H_ROBUST, RegMode.AIAP_H)

    @property
    def uses_aiap(self) -> bool:
        return self in (RegMode.AIAP, RegMode.AIAP_H)


class MotionKind(StrEnum):
    TRANSLATION = "translation"
    ROTATION = "rotation"
    SCALING = "scaling"
    SHEARING = "shearing"


# Optimizer and schedule
DEFAULT_LR = 1e-4
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8
DEFAULT_ITERS = 2000

# Architecture
DEFAULT_HIDDEN = 128
DEFAULT_LAYERS = 2
ALIGNMENT_LAYERS = 3
DEFAULT_OMEGA = 30.0

# Regularization
DEFAULT_SMOOTHNESS_WEIGHT = 0.1
DEFAULT_ELASTIC_WEIGHT = 0.1
DEFAULT_AIAP_WEIGHT = 1.0
AIAP_NEIGHBORS = 5

# Data
DEFAULT_TRAIN_FRACTION = 0.25


@dataclass(slots=True)
class SirenArch:
    """Hidden width, hidden layer count and first-layer frequency of a SIREN field."""

    hidden_dim: int = DEFAULT_HIDDEN
    n_hidden: int = DEFAULT_LAYERS
    omega_first: float = DEFAULT_OMEGA

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.n_hidden < 1:
            raise ContractError(
                f"hidden width and layer count must be >= 1, got {self.hidden_dim}, {self.n_hidden}"
            )
        if not self.omega_first > 0.0:
            raise ContractError(f"omega_first must be > 0, got {self.omega_first}")


@dataclass(slots=True)
class LossWeights:
    """Weights of the guided alignment objective: Chamfer, guidance, AIAP, smoothness."""

    alpha1: float = 1e3
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1e-3

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("alpha1", "alpha2", "alpha3", "alpha4"):
            value = getattr(self, name)
            if not value >= 0.0 or value == float("inf"):
                raise ContractError(f"loss weight {name} must be finite and >= 0, got {value}")

    @classmethod
    def for_mode(cls, mode: RegMode) -> LossWeights:
        """Defaults with the regularizers the mode does not enable switched off."""
        weights = cls()
        if not mode.uses_aiap:
            weights.alpha3 = 0.0
        if not mode.uses_smoothness:
            weights.alpha4 = 0.0
        return weights


@dataclass(slots=True)
class TrainConfig:
    """Settings shared by the trajectory and alignment drivers."""

    lr: float = DEFAULT_LR
    iters: int = DEFAULT_ITERS
    seed: int = 0
    batch_points: int | Literal["all"] = "all"
    reg_mode: RegMode = RegMode.NONE
    smoothness_weight: float = DEFAULT_SMOOTHNESS_WEIGHT
    elastic_weight: float = DEFAULT_ELASTIC_WEIGHT
    aiap_weight: float = DEFAULT_AIAP_WEIGHT
    betas: tuple[float, float] = DEFAULT_BETAS
    eps: float = DEFAULT_EPS
    deterministic: bool = True
    jacobian: Literal["analytical", "finite-difference"] = "analytical"
    log_every: int = 100

    def __post_init__(self) -> None:
        if not self.lr > 0.0:
            raise ContractError(f"lr must be > 0, got {self.lr}")
        if self.iters < 1:
            raise ContractError(f"iters must be >= 1, got {self.iters}")
        if self.batch_points != "all" and int(self.batch_points) < 1:
            raise ContractError(f"batch_points must be >= 1 or 'all', got {self.batch_points}")
        self.reg_mode = RegMode(self.reg_mode)


def resolve_threads(env: Mapping[str, str] | None = None) -> int:
    """Worker thread cap from MOTIONFIELD_THREADS; 0 or unset means one per CPU."""
    source: Mapping[str, str] = os.environ if env is None else env
    raw = source.get(THREADS_ENV, "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0, got {value}")
    if value == 0:
        return os.cpu_count() or 1
    return value
