"""Tests for configuration records and environment settings."""

import os

import pytest

from motionfield.config import (
    LossWeights,
    RegMode,
    SirenArch,
    TrainConfig,
    Variant,
    resolve_threads,
)
from motionfield.errors import ContractError, UsageError


def test_siren_arch_validation() -> None:
    assert SirenArch().hidden_dim == 128
    for bad in ({"hidden_dim": 0}, {"n_hidden": 0}, {"omega_first": 0.0}):
        with pytest.raises(ContractError):
            SirenArch(**bad)  # type: ignore[arg-type]


def test_loss_weight_defaults_and_validation() -> None:
    w = LossWeights()
    assert (w.alpha1, w.alpha2, w.alpha3, w.alpha4) == (1e3, 1.0, 1.0, 1e-3)
    with pytest.raises(ContractError):
        LossWeights(alpha2=-1.0)
    with pytest.raises(ContractError):
        LossWeights(alpha1=float("inf"))
    with pytest.raises(ContractError):
        LossWeights(alpha4=float("nan"))


@pytest.mark.parametrize(
    ("mode", "alpha3", "alpha4"),
    [
        (RegMode.NONE, 0.0, 0.0),
        (RegMode.AIAP, 1.0, 0.0),
        (RegMode.H_ROBUST, 0.0, 1e-3),
        (RegMode.AIAP_H, 1.0, 1e-3),
        (RegMode.ELASTIC, 0.0, 0.0),
    ],
)
def test_loss_weights_for_mode(mode: RegMode, alpha3: float, alpha4: float) -> None:
    w = LossWeights.for_mode(mode)
    assert (w.alpha1, w.alpha2, w.alpha3, w.alpha4) == (1e3, 1.0, alpha3, alpha4)


def test_reg_mode_flags() -> None:
    assert RegMode.AIAP_H.uses_smoothness and RegMode.AIAP_H.robust
    assert RegMode.H_HOMOGENEOUS.uses_smoothness and not RegMode.H_HOMOGENEOUS.robust
    assert not RegMode.ELASTIC.uses_smoothness
    assert RegMode.AIAP.uses_aiap and not RegMode.H_ROBUST.uses_aiap


def test_variant_families() -> None:
    assert {v for v in Variant if v.is_siren_field} == {
        Variant.TRANS,
        Variant.SE3,
        Variant.SCALED_SE3,
        Variant.AFFINITY,
    }


def test_train_config_validation() -> None:
    cfg = TrainConfig(reg_mode="ah")  # type: ignore[arg-type]
    assert cfg.reg_mode is RegMode.AIAP_H
    assert TrainConfig(batch_points=64).batch_points == 64
    for bad in ({"lr": 0.0}, {"iters": 0}, {"batch_points": 0}):
        with pytest.raises(ContractError):
            TrainConfig(**bad)  # type: ignore[arg-type]
    with pytest.raises(ValueError):
        TrainConfig(reg_mode="x")  # type: ignore[arg-type]


def test_resolve_threads() -> None:
    assert resolve_threads({"MOTIONFIELD_THREADS": "3"}) == 3
    assert resolve_threads({"MOTIONFIELD_THREADS": " "}) == (os.cpu_count() or 1)
    assert resolve_threads({}) == (os.cpu_count() or 1)
    assert resolve_threads({"MOTIONFIELD_THREADS": "0"}) == (os.cpu_count() or 1)


@pytest.mark.parametrize("raw", ["-1", "two", "1.5"])
def test_resolve_threads_rejects_bad_values(raw: str) -> None:
    with pytest.raises(UsageError):
        resolve_threads({"MOTIONFIELD_THREADS": raw})


def test_resolve_threads_reads_the_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("MOTIONFIELD_THREADS", "2")
    assert resolve_threads() == 2
