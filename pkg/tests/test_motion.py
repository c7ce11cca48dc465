"""Tests for motion models, variant heads and their spatial Jacobians."""

import numpy as np
import pytest

from motionfield.config import Variant
from motionfield.core import motion
from motionfield.core import tensor as tn
from motionfield.core.motion import (
    DpfMotionModel,
    SirenMotionModel,
    affinity_from_translation,
    build_siren_model,
    frame_index,
    frame_times,
    normalize_time,
    rot2d_to_matrix,
    rot6d_to_matrix,
)
from motionfield.core.siren import init_siren
from motionfield.errors import ContractError, DegeneracyError, DomainError
from tests.helpers import assert_grads_match, numeric_jacobian

SIREN_VARIANTS = [Variant.TRANS, Variant.SE3, Variant.SCALED_SE3, Variant.AFFINITY]


@pytest.fixture
def points() -> np.ndarray:
    return np.random.default_rng(4).uniform(-1.0, 1.0, size=(6, 3))


def _perturb(m: motion.MotionModel, scale: float = 0.1, seed: int = 0) -> None:
    """Move every parameter off its initial value so every head output is nontrivial."""
    rng = np.random.default_rng(seed)
    for p in m.parameters():
        p.data += scale * rng.standard_normal(p.shape)


def test_time_normalization_round_trip() -> None:
    np.testing.assert_allclose(normalize_time([0, 5, 10], 11), [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(frame_index(frame_times(7), 7), np.arange(7))
    stored = frame_times(200).astype(np.float32)
    np.testing.assert_array_equal(frame_index(stored, 200), np.arange(200))
    with pytest.raises(ContractError):
        frame_index(0.1, 7)
    with pytest.raises(ContractError):
        normalize_time(0, 1)


def test_model_normalizes_raw_time() -> None:
    m = build_siren_model(Variant.TRANS, 8, 1, n_frames=21)
    np.testing.assert_allclose(m.normalize_raw_time([0.0, 10.0, 20.0]), [-1.0, 0.0, 1.0])


def test_checked_mode_rejects_times_outside_range(points: np.ndarray) -> None:
    m = build_siren_model(Variant.TRANS, 8, 1)
    m.warp(points, 1.5)
    with tn.checked(), pytest.raises(DomainError):
        m.warp(points, 1.5)


def test_rot6d_of_the_bias_is_identity() -> None:
    r = rot6d_to_matrix(np.tile(motion.ROT6D_BIAS, (3, 1)))
    np.testing.assert_allclose(r.data, np.broadcast_to(np.eye(3), (3, 3, 3)), atol=1e-15)


def test_rot6d_produces_proper_rotations() -> None:
    raw = np.random.default_rng(0).standard_normal((50, 6))
    r = rot6d_to_matrix(raw).data
    eye = np.broadcast_to(np.eye(3), r.shape)
    np.testing.assert_allclose(np.swapaxes(r, 1, 2) @ r, eye, atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(r), 1.0, atol=1e-12)
    # the first column is the normalized first half
    first = raw[:, :3] / np.linalg.norm(raw[:, :3], axis=1, keepdims=True)
    np.testing.assert_allclose(r[:, :, 0], first, atol=1e-12)


def test_rot6d_degenerate_rows_are_reported() -> None:
    raw = np.tile(motion.ROT6D_BIAS, (4, 1))
    raw[2, :3] = 0.0
    with pytest.raises(DegeneracyError) as excinfo:
        rot6d_to_matrix(raw)
    assert excinfo.value.row == 2

    parallel = np.tile(motion.ROT6D_BIAS, (2, 1))
    parallel[1] = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0]
    with pytest.raises(DegeneracyError) as excinfo:
        rot6d_to_matrix(parallel)
    assert excinfo.value.row == 1


def test_rot2d_normalizes_angle_vectors() -> None:
    r = rot2d_to_matrix([[0.0, 2.0]]).data[0]
    np.testing.assert_allclose(r, [[0.0, -1.0], [1.0, 0.0]], atol=1e-15)
    with pytest.raises(DegeneracyError):
        rot2d_to_matrix([[0.0, 0.0]])


@pytest.mark.parametrize("variant", SIREN_VARIANTS)
def test_fresh_heads_start_near_identity(variant: Variant, points: np.ndarray) -> None:
    """With the output layer zeroed the warp is exactly the identity."""
    m = build_siren_model(variant, 8, 1)
    assert isinstance(m, SirenMotionModel)
    m.net.weights[-1].data[:] = 0.0
    np.testing.assert_allclose(m.warp(points, 0.3).data, points, atol=1e-14)


@pytest.mark.parametrize("variant", SIREN_VARIANTS)
def test_warp_equals_evaluated_affine_map(variant: Variant, points: np.ndarray) -> None:
    m = build_siren_model(variant, 8, 1, seed=1)
    _perturb(m)
    amap = motion.evaluate_map(m, points, -0.2)
    assert amap.A.shape == (6, 3, 3)
    np.testing.assert_allclose(amap.apply(points).data, m.warp(points, -0.2).data, atol=1e-13)


def test_evaluate_map_needs_an_affine_head(points: np.ndarray) -> None:
    m = build_siren_model(Variant.DPF, 8, 1, n_frames=3)
    with pytest.raises(ContractError):
        motion.evaluate_map(m, points, 0.0)


@pytest.mark.parametrize("variant", SIREN_VARIANTS)
@pytest.mark.parametrize("spatial_dim", [2, 3])
def test_motion_jacobian_matches_central_differences(
    variant: Variant, spatial_dim: int
) -> None:
    """dy/dx assembled from the heads equals the finite-difference Jacobian of warp."""
    m = build_siren_model(variant, 16, 2, spatial_dim=spatial_dim, seed=2)
    _perturb(m, seed=3)
    rng = np.random.default_rng(5)
    x = rng.uniform(-1.0, 1.0, size=(5, spatial_dim))
    t = rng.uniform(-1.0, 1.0, size=5)
    jac = motion.motion_jacobian(m, x, t)
    assert jac.shape == (5, spatial_dim, spatial_dim)
    expected = numeric_jacobian(lambda p: m.warp(p, t).data, x)
    np.testing.assert_allclose(jac.data, expected, rtol=1e-4, atol=1e-6)


def test_dpf_jacobian_matches_central_differences() -> None:
    m = build_siren_model(Variant.DPF, 16, 2, n_frames=4, seed=2)
    x = np.random.default_rng(6).uniform(-1.0, 1.0, size=(8, 3))
    t = np.repeat(frame_times(4), 2)
    jac = m.motion_jacobian(x, t)
    expected = numeric_jacobian(lambda p: m.warp(p, t).data, x)
    np.testing.assert_allclose(jac.data, expected, rtol=1e-4, atol=1e-6)
    # canonical frame rows are the identity
    np.testing.assert_array_equal(jac.data[:2], np.broadcast_to(np.eye(3), (2, 3, 3)))


def test_dpf_warp_groups_rows_by_frame() -> None:
    """Mixed time stamps give the same rows as warping each frame separately."""
    m = build_siren_model(Variant.DPF, 8, 1, n_frames=3, seed=1)
    assert isinstance(m, DpfMotionModel)
    x = np.random.default_rng(1).uniform(-1.0, 1.0, size=(6, 3))
    times = frame_times(3)[[2, 0, 1, 2, 1, 0]]
    mixed = m.warp(x, times).data
    for row, t in enumerate(times):
        np.testing.assert_allclose(mixed[row], m.warp(x[row : row + 1], t).data[0], atol=1e-14)
    np.testing.assert_array_equal(m.warp(x, -1.0).data, x)
    with pytest.raises(ContractError):
        m.warp(x, 0.25)


def test_field_gradients_of_translation_have_no_matrix_part(points: np.ndarray) -> None:
    m = build_siren_model(Variant.TRANS, 8, 1)
    dA, du = m.field_gradients(points, 0.0)
    assert dA is None
    assert du.shape == (6, 3, 3)
    dA, du = build_siren_model(Variant.AFFINITY, 8, 1).field_gradients(points, 0.0)
    assert dA is not None and dA.shape == (6, 3, 3, 3)


def test_affinity_from_translation_nests_exactly(points: np.ndarray) -> None:
    """An affinity field built from a translation field warps identically."""
    trans = build_siren_model(Variant.TRANS, 16, 2, seed=9)
    assert isinstance(trans, SirenMotionModel)
    _perturb(trans, seed=9)
    nested = affinity_from_translation(trans)
    assert nested.variant is Variant.AFFINITY
    for t in (-1.0, 0.0, 0.7):
        np.testing.assert_allclose(
            nested.warp(points, t).data, trans.warp(points, t).data, rtol=0.0, atol=1e-12
        )
    with pytest.raises(ContractError):
        affinity_from_translation(nested)


def test_warp_is_differentiable_through_the_rotation_head(points: np.ndarray) -> None:
    m = build_siren_model(Variant.SCALED_SE3, 4, 1, seed=3)
    _perturb(m, seed=4)
    assert_grads_match(lambda: tn.square(m.warp(points, 0.5)).mean(), m.parameters(), tol=1e-4)


def test_jacobian_penalty_is_differentiable(points: np.ndarray) -> None:
    m = build_siren_model(Variant.SE3, 4, 1, seed=5, omega_first=3.0)
    _perturb(m, seed=6)
    assert_grads_match(
        lambda: tn.square(m.motion_jacobian(points, -0.5)).mean(), m.parameters(), tol=1e-4
    )


def test_counts_split_weights_and_biases() -> None:
    m = build_siren_model(Variant.AFFINITY, 8, 2)
    total = sum(p.size for p in m.parameters())
    assert m.param_count() == 4 * 8 + 2 * 64 + 8 * 12
    assert m.bias_count() == total - m.param_count() == 8 * 3 + 12


def test_model_rejects_mismatched_networks() -> None:
    with pytest.raises(ContractError):
        SirenMotionModel(Variant.AFFINITY, init_siren(4, 8, 1, 3))
    with pytest.raises(ContractError):
        DpfMotionModel([])


def test_point_shape_is_checked() -> None:
    m = build_siren_model(Variant.TRANS, 8, 1)
    with pytest.raises(ContractError):
        m.warp(np.zeros((4, 2)), 0.0)
    with pytest.raises(ContractError):
        m.warp(np.zeros((4, 3)), np.zeros(3))
