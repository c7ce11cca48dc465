"""Tests for the sinusoidal network: initialization, Jacobians, sizes and bounds."""

import numpy as np
import pytest

from motionfield.config import Variant
from motionfield.core import siren
from motionfield.core import tensor as tn
from motionfield.core.motion import build_siren_model
from motionfield.errors import ContractError, DomainError
from tests.helpers import assert_grads_match, numeric_jacobian

SIREN_VARIANTS = [Variant.TRANS, Variant.SE3, Variant.SCALED_SE3, Variant.AFFINITY]


@pytest.fixture
def small_net() -> siren.SirenParams:
    return siren.init_siren(4, 16, 2, 5, seed=3)


@pytest.fixture
def queries() -> np.ndarray:
    rng = np.random.default_rng(11)
    return rng.uniform(-1.0, 1.0, size=(8, 4))


def test_init_bounds_and_zero_biases() -> None:
    """First layer in U(+-1/fan_in), later layers in U(+-sqrt(6/fan_in)), biases zero."""
    net = siren.init_siren(4, 64, 3, 12, seed=0)
    assert [w.shape for w in net.weights] == [(64, 4), (64, 64), (64, 64), (64, 64), (12, 64)]
    assert np.abs(net.weights[0].data).max() <= 1.0 / 4
    for w in net.weights[1:]:
        assert np.abs(w.data).max() <= np.sqrt(6.0 / 64)
    assert all(not np.any(b.data) for b in net.biases)
    assert all(p.requires_grad for p in net.parameters())
    assert net.n_layers == 5


def test_init_is_deterministic_per_seed() -> None:
    a = siren.init_siren(4, 8, 1, 3, seed=5)
    b = siren.init_siren(4, 8, 1, 3, seed=5)
    c = siren.init_siren(4, 8, 1, 3, seed=6)
    for wa, wb in zip(a.weights, b.weights, strict=True):
        np.testing.assert_array_equal(wa.data, wb.data)
    assert not np.array_equal(a.weights[0].data, c.weights[0].data)


def test_init_rejects_bad_shapes() -> None:
    with pytest.raises(ContractError):
        siren.init_siren(4, 16, 0, 3)
    with pytest.raises(ContractError):
        siren.init_siren(1, 16, 2, 3, time_input=True)


def test_forward_matches_explicit_formula(
    small_net: siren.SirenParams, queries: np.ndarray
) -> None:
    w, b = [x.data for x in small_net.weights], [x.data for x in small_net.biases]
    h = np.sin(30.0 * (queries @ w[0].T + b[0]))
    for wi, bi in zip(w[1:-1], b[1:-1], strict=True):
        h = np.sin(h @ wi.T + bi)
    expected = h @ w[-1].T + b[-1]
    np.testing.assert_allclose(siren.forward(small_net, queries).data, expected, atol=1e-12)


def test_analytical_jacobian_matches_central_differences(
    small_net: siren.SirenParams, queries: np.ndarray
) -> None:
    """The spatial Jacobian covers the first three input columns only."""
    out, jac = siren.forward_with_jacobian(small_net, queries)
    assert jac.shape == (8, 5, 3)
    np.testing.assert_allclose(out.data, siren.forward(small_net, queries).data, atol=1e-12)

    def spatial(x: np.ndarray) -> np.ndarray:
        return siren.forward(small_net, np.hstack([x, queries[:, 3:]])).data

    expected = numeric_jacobian(spatial, queries[:, :3])
    np.testing.assert_allclose(jac.data, expected, rtol=1e-4, atol=1e-6)


def test_finite_difference_method_agrees(
    small_net: siren.SirenParams, queries: np.ndarray
) -> None:
    _, analytical = siren.output_and_jacobian(small_net, queries, "analytical")
    _, approx = siren.output_and_jacobian(small_net, queries, "finite-difference")
    np.testing.assert_allclose(approx.data, analytical.data, rtol=1e-4, atol=1e-5)


def test_unknown_jacobian_method(small_net: siren.SirenParams, queries: np.ndarray) -> None:
    with pytest.raises(ContractError):
        siren.output_and_jacobian(small_net, queries, "complex-step")  # type: ignore[arg-type]


def test_jacobian_is_differentiable_in_the_weights(queries: np.ndarray) -> None:
    """Gradients of a Jacobian penalty with respect to the weights are exact."""
    net = siren.init_siren(4, 6, 1, 3, omega_first=5.0, seed=2)
    assert_grads_match(
        lambda: tn.square(siren.spatial_jacobian(net, queries)).mean(),
        net.parameters(),
        tol=1e-4,
    )


def test_query_shape_and_checked_mode(small_net: siren.SirenParams) -> None:
    with pytest.raises(ContractError):
        siren.forward(small_net, np.zeros((3, 3)))
    bad = np.zeros((1, 4))
    bad[0, 0] = np.nan
    with tn.checked(), pytest.raises(DomainError):
        siren.forward(small_net, bad)


@pytest.mark.parametrize(
    ("variant", "expected"),
    [
        (Variant.TRANS, 50048),
        (Variant.SE3, 50816),
        (Variant.SCALED_SE3, 50944),
        (Variant.AFFINITY, 51200),
    ],
)
def test_weight_counts_at_the_reference_size(variant: Variant, expected: int) -> None:
    """d = 128 and three hidden layers; biases are not counted."""
    assert siren.param_count(variant, 128, 3) == expected
    assert build_siren_model(variant, 128, 3).param_count() == expected


def test_per_frame_weight_count() -> None:
    assert siren.param_count(Variant.DPF, 128, 3, n_frames=31) == (6 * 128 + 3 * 128**2) * 30
    assert siren.param_count(Variant.DPF, 16, 1, n_frames=3) == (
        build_siren_model(Variant.DPF, 16, 1, n_frames=3).param_count()
    )
    with pytest.raises(ContractError):
        siren.param_count(Variant.DPF, 16, 1)


def test_output_widths() -> None:
    assert siren.output_dim(Variant.AFFINITY, 2) == 6
    assert siren.output_dim(Variant.SE3, 2) == 4
    assert siren.output_dim(Variant.SCALED_SE3, 3) == 10
    with pytest.raises(ContractError):
        siren.output_dim(Variant.RELU_PE)
    with pytest.raises(ContractError):
        siren.output_dim(Variant.TRANS, 4)


def test_spectral_norm_matches_svd() -> None:
    rng = np.random.default_rng(0)
    for shape in [(5, 3), (16, 16), (3, 9)]:
        m = rng.standard_normal(shape)
        assert siren.spectral_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)
    assert siren.spectral_norm(np.zeros((3, 3))) == 0.0


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("d", [8, 32, pytest.param(128, marks=pytest.mark.slow)])
def test_spectral_bound_holds_on_random_networks(d: int, n: int) -> None:
    """The largest singular value of every spatial Jacobian stays under the bound."""
    rng = np.random.default_rng(100 * d + n)
    for seed in range(8):
        net = siren.init_siren(4, d, n, 12, seed=seed)
        q = rng.uniform(-1.0, 1.0, size=(16, 4))
        jac = siren.spatial_jacobian(net, q).data
        largest = max(np.linalg.norm(j, 2) for j in jac)
        assert largest <= siren.spectral_bound(net)


def test_one_dimensional_jacobian_is_bounded_by_the_weight_product() -> None:
    rng = np.random.default_rng(4)
    for n in (1, 2, 3):
        scalars = rng.uniform(-2.0, 2.0, size=n + 2)
        net = siren.SirenParams(
            1,
            1,
            n,
            1,
            1.0,
            False,
            [tn.parameter([[w]]) for w in scalars],
            [tn.parameter(rng.uniform(-1.0, 1.0, size=1)) for _ in scalars],
        )
        x = np.linspace(-1.0, 1.0, 201).reshape(-1, 1)
        slope = np.abs(siren.spatial_jacobian(net, x).data).max()
        assert slope <= np.prod(np.abs(scalars)) + 1e-12
        assert siren.spectral_bound(net) == pytest.approx(np.prod(np.abs(scalars)))


def test_hidden_preactivations_start_near_standard_normal() -> None:
    net = siren.init_siren(4, 128, 2, 12, seed=0)
    q = np.random.default_rng(0).uniform(-1.0, 1.0, size=(4096, 4))
    h = np.sin(net.omega_first * (q @ net.weights[0].data.T))
    for w in net.weights[1:-1]:
        z = h @ w.data.T
        assert abs(z.mean()) < 0.1
        assert 0.4 <= z.std() <= 1.6
        h = np.sin(z)


def test_output_is_smooth_in_time(small_net: siren.SirenParams, queries: np.ndarray) -> None:
    eps = 1e-6
    later = queries.copy()
    later[:, -1] += eps
    step = np.abs(siren.forward(small_net, later).data - siren.forward(small_net, queries).data)
    scale = np.sqrt(sum(np.sum(p.data**2) for p in small_net.parameters()))
    assert step.max() <= 1e-3 * scale


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("d", [8, 64, 128])
@pytest.mark.parametrize("variant", [*SIREN_VARIANTS, Variant.DPF])
def test_weight_count_matches_the_constructed_networks(variant: Variant, d: int, n: int) -> None:
    m = build_siren_model(variant, d, n, n_frames=3)
    constructed = sum(p.size for p in m.parameters() if p.ndim == 2)
    expected = siren.param_count(variant, d, n, n_frames=3)
    assert constructed == expected
    assert m.param_count() == expected
