"""Tests for training objectives and evaluation metrics."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from motionfield.config import LossWeights, Variant
from motionfield.core import losses
from motionfield.core import tensor as tn
from motionfield.core.baselines import build_relu_model
from motionfield.core.motion import SirenMotionModel, build_siren_model
from motionfield.errors import ContractError
from motionfield.geometry.mesh import PointSet
from motionfield.geometry.spatial import KdTree
from tests.helpers import assert_grads_match


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(21)


def _brute_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return 0.5 * (d2.min(axis=1).mean() + d2.min(axis=0).mean())


def test_data_l1_value() -> None:
    pred = tn.constant([[0.0, 0.0], [1.0, 1.0]])
    target = [[1.0, -2.0], [1.0, 1.5]]
    assert losses.data_l1(pred, target).item() == pytest.approx((3.0 + 0.5) / 2)
    with pytest.raises(ContractError):
        losses.data_l1(pred, [[0.0, 0.0]])


def test_data_l1_gradient(rng: np.random.Generator) -> None:
    pred = tn.parameter(rng.standard_normal((7, 3)))
    target = rng.standard_normal((7, 3))
    assert_grads_match(lambda: losses.data_l1(pred, target), [pred])


def test_epe_is_l1_flow_error() -> None:
    x = np.zeros((2, 3))
    gt = np.stack([x, x + 1.0])
    assert losses.epe(gt, gt, x) == 0.0
    pred = gt.copy()
    pred[1, 0] = [1.0, 1.0, 2.0]
    assert losses.epe(pred, gt, x) == pytest.approx(1.0 / 4)


def test_chamfer_matches_brute_force(rng: np.random.Generator) -> None:
    for _ in range(20):
        a = rng.standard_normal((200, 3))
        b = rng.standard_normal((150, 3)) * 1.5
        assert losses.chamfer(a, b).cd == pytest.approx(_brute_chamfer(a, b), rel=1e-12)


def test_chamfer_of_a_set_with_itself_is_zero(rng: np.random.Generator) -> None:
    pts = rng.standard_normal((50, 3))
    normals = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    result = losses.chamfer(PointSet(pts, normals), PointSet(pts, -normals), with_normals=True)
    assert result.cd == 0.0
    assert result.cdn == pytest.approx(0.0, abs=1e-12)


def test_normal_term_measures_misalignment() -> None:
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    up = np.tile([0.0, 0.0, 1.0], (2, 1))
    side = np.tile([1.0, 0.0, 0.0], (2, 1))
    result = losses.chamfer(PointSet(pts, up), PointSet(pts, side), with_normals=True)
    assert result.cdn == pytest.approx(1.0)
    with pytest.raises(ContractError):
        losses.chamfer(PointSet(pts), PointSet(pts), with_normals=True)


def test_chamfer_rejects_empty_sets() -> None:
    with pytest.raises(ContractError):
        losses.chamfer(np.zeros((0, 3)), np.zeros((3, 3)))


def test_chamfer_loss_value_and_gradient(rng: np.random.Generator) -> None:
    """The differentiable form agrees with the metric and with finite differences."""
    target = rng.standard_normal((40, 3))
    pred = tn.parameter(rng.standard_normal((30, 3)))
    tree = KdTree(target)
    value = losses.chamfer_loss(pred, tree).item()
    assert value == pytest.approx(losses.chamfer(pred.data, target).cd, rel=1e-12)
    assert_grads_match(lambda: losses.chamfer_loss(pred, tree), [pred])


def test_neighbor_graph_excludes_self(rng: np.random.Generator) -> None:
    pts = rng.standard_normal((30, 3))
    graph = losses.build_neighbor_graph(pts, k=5)
    assert graph.indices.shape == (30, 5)
    assert graph.k == 5
    assert not np.any(graph.indices == np.arange(30)[:, None])
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    np.testing.assert_array_equal(graph.indices, np.argsort(d, axis=1)[:, :5])
    with pytest.raises(ContractError):
        losses.build_neighbor_graph(pts[:5], k=5)


def test_aiap_vanishes_under_rigid_motion(rng: np.random.Generator) -> None:
    pts = rng.standard_normal((40, 3))
    graph = losses.build_neighbor_graph(pts)
    rot = Rotation.from_rotvec([0.3, -0.8, 0.5]).as_matrix()
    moved = tn.constant(pts @ rot.T + [1.0, 2.0, -3.0])
    assert losses.aiap(moved, pts, graph).item() <= 1e-12
    stretched = tn.constant(pts * 1.1)
    assert losses.aiap(stretched, pts, graph).item() > 1e-4


def test_aiap_ignores_a_global_rigid_motion_of_the_warp(rng: np.random.Generator) -> None:
    pts = rng.standard_normal((40, 3))
    graph = losses.build_neighbor_graph(pts)
    warped = pts + 0.2 * rng.standard_normal(pts.shape)
    rot = Rotation.from_rotvec([-0.7, 0.1, 1.2]).as_matrix()
    base = losses.aiap(tn.constant(warped), pts, graph).item()
    moved = losses.aiap(tn.constant(warped @ rot.T + [0.5, -4.0, 2.0]), pts, graph).item()
    assert moved == pytest.approx(base, rel=1e-9)


def test_aiap_of_uniform_scaling_is_the_mean_squared_neighbor_distance(
    rng: np.random.Generator,
) -> None:
    """Doubling every distance changes each by its own length."""
    pts = rng.standard_normal((40, 3))
    graph = losses.build_neighbor_graph(pts)
    value = losses.aiap(tn.constant(2.0 * pts), pts, graph).item()
    assert value == pytest.approx(float(np.mean(graph.distances**2)), rel=1e-9)


def test_aiap_gradient(rng: np.random.Generator) -> None:
    pts = rng.standard_normal((20, 3))
    graph = losses.build_neighbor_graph(pts, k=4)
    warped = tn.parameter(pts + 0.1 * rng.standard_normal(pts.shape))
    assert_grads_match(lambda: losses.aiap(warped, pts, graph), [warped])


def test_charbonnier_is_below_the_quadratic() -> None:
    s2 = np.array([0.0, 0.5, 4.0, 100.0])
    value = losses.charbonnier(s2).data
    assert value[0] == 0.0
    assert np.all(value <= s2)
    np.testing.assert_allclose(value, np.sqrt(1.0 + s2) - 1.0)


def test_smoothness_of_a_constant_field_is_zero(rng: np.random.Generator) -> None:
    m = build_siren_model(Variant.AFFINITY, 8, 1)
    assert isinstance(m, SirenMotionModel)
    m.net.weights[-1].data[:] = 0.0
    m.net.biases[-1].data[:] = rng.standard_normal(12)
    x = rng.uniform(-1.0, 1.0, size=(10, 3))
    assert losses.smoothness(m, x, 0.0).item() == 0.0
    assert losses.smoothness(m, x, 0.0, robust=False).item() == 0.0


def test_elastic_vanishes_for_a_constant_rotation(rng: np.random.Generator) -> None:
    """A = R everywhere and u constant gives J^T J = I."""
    m = build_siren_model(Variant.AFFINITY, 8, 1)
    assert isinstance(m, SirenMotionModel)
    rot = Rotation.from_rotvec([0.2, 0.4, -0.1]).as_matrix()
    m.net.weights[-1].data[:] = 0.0
    m.net.biases[-1].data[:9] = (rot - np.eye(3)).reshape(-1)
    m.net.biases[-1].data[9:] = [0.5, -0.5, 0.1]
    x = rng.uniform(-1.0, 1.0, size=(10, 3))
    assert losses.elastic(m, x, 0.3).item() <= 1e-24


def test_elastic_of_a_uniform_doubling() -> None:
    m = build_siren_model(Variant.AFFINITY, 8, 1)
    assert isinstance(m, SirenMotionModel)
    m.net.weights[-1].data[:] = 0.0
    m.net.biases[-1].data[:9] = np.eye(3).reshape(-1)
    m.net.biases[-1].data[9:] = 0.0
    x = np.random.default_rng(2).uniform(-1.0, 1.0, size=(5, 3))
    assert losses.elastic(m, x, -0.5).item() == pytest.approx(27.0)


def test_regularizer_gradients(rng: np.random.Generator) -> None:
    m = build_siren_model(Variant.AFFINITY, 4, 1, seed=1, omega_first=4.0)
    x = rng.uniform(-1.0, 1.0, size=(6, 3))
    t = rng.uniform(-1.0, 1.0, size=6)
    assert_grads_match(lambda: losses.smoothness(m, x, t), m.parameters(), tol=1e-4)
    assert_grads_match(
        lambda: losses.smoothness(m, x, t, robust=False), m.parameters(), tol=1e-4
    )
    assert_grads_match(lambda: losses.elastic(m, x, t), m.parameters(), tol=1e-4)


def test_regularizers_need_jacobians() -> None:
    m = build_relu_model(3, 2, hidden_dim=8, n_hidden=2, pe_levels=1)
    with pytest.raises(ContractError):
        losses.smoothness(m, np.zeros((2, 3)), 0.0)
    with pytest.raises(ContractError):
        losses.elastic(m, np.zeros((2, 3)), 0.0)


def test_alignment_objective_skips_zero_weights(rng: np.random.Generator) -> None:
    m = build_siren_model(Variant.AFFINITY, 8, 1)
    template = rng.standard_normal((30, 3))
    scan = KdTree(rng.standard_normal((40, 3)))
    guide = losses.GuidancePair(template[:5], template[:5] + 0.1)
    terms: dict[str, float] = {}
    only_guidance = LossWeights(0.0, 1.0, 0.0, 0.0)
    total = losses.alignment_objective(m, template, scan, guide, None, only_guidance, 0.0, terms)
    assert set(terms) == {"guidance"}
    assert total.item() == pytest.approx(terms["guidance"])

    terms = {}
    graph = losses.build_neighbor_graph(template)
    w = LossWeights(2.0, 1.0, 3.0, 0.5)
    total = losses.alignment_objective(m, template, scan, guide, graph, w, 0.0, terms)
    assert set(terms) == {"chamfer", "guidance", "aiap", "smoothness"}
    expected = (
        2.0 * terms["chamfer"] + terms["guidance"] + 3.0 * terms["aiap"] + 0.5 * terms["smoothness"]
    )
    assert total.item() == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ContractError):
        losses.alignment_objective(m, template, scan, guide, None, w, 0.0)


def test_alignment_objective_gradient(rng: np.random.Generator) -> None:
    m = build_siren_model(Variant.AFFINITY, 4, 1, seed=3, omega_first=4.0)
    template = rng.uniform(-1.0, 1.0, size=(12, 3))
    scan = KdTree(rng.uniform(-1.0, 1.0, size=(15, 3)))
    guide = losses.GuidancePair(template[:4], template[:4] + [0.3, -0.2, 0.1])
    graph = losses.build_neighbor_graph(template, k=3)
    w = LossWeights(1.0, 1.0, 1.0, 0.1)
    assert_grads_match(
        lambda: losses.alignment_objective(m, template, scan, guide, graph, w, 0.25),
        m.parameters(),
        tol=1e-4,
    )


def test_guidance_pairs_must_match() -> None:
    with pytest.raises(ContractError):
        losses.GuidancePair(np.zeros((3, 3)), np.zeros((4, 3)))


def test_temporal_stats() -> None:
    """A rigidly translating edge has zero length variation and constant speed."""
    base = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    steps = np.array([0.0, 1.0, 2.0, 3.0])[:, None, None] * np.array([0.0, 0.5, 0.0])
    traj = base[None] + steps
    std_e, std_v = losses.temporal_stats(traj, [[0, 1]])
    assert std_e == pytest.approx(0.0, abs=1e-15)
    assert std_v == pytest.approx(0.0, abs=1e-15)

    accelerating = base[None] + np.array([0.0, 1.0, 3.0])[:, None, None] * [1.0, 0.0, 0.0]
    _, std_v = losses.temporal_stats(accelerating, [[0, 1]])
    assert std_v == pytest.approx(0.5)
    with pytest.raises(ContractError):
        losses.temporal_stats(traj[:2], [[0, 1]])
