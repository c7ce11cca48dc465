"""Sinusoidal MLP (SIREN): initialization, forward pass, spatial Jacobian, bounds.

The network maps a query row [x; t] through

    h0 = sin(omega * (W0 q + b0)),  h_i = sin(W_i h_{i-1} + b_i),  y = W_out h_n + b_out

Its spatial Jacobian is the phase-shifted network obtained by chaining the
weight products gated by cos of the same pre-activations; it is assembled from
tape primitives so it can itself be differentiated with respect to the weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from motionfield.config import DEFAULT_OMEGA, Variant
from motionfield.core import tensor as tn
from motionfield.core.tensor import Array, Tensor
from motionfield.errors import ContractError, DomainError

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class SirenParams:
    """Layered weights and biases of a sinusoidal MLP plus its architecture.

    Layer 0 is the input layer, layers 1..n_hidden are the d x d hidden layers
    and the last layer is the linear output layer.
    """

    in_dim: int
    hidden_dim: int
    n_hidden: int
    out_dim: int
    omega_first: float
    time_input: bool
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    @property
    def spatial_dim(self) -> int:
        """Number of leading input columns that are spatial coordinates."""
        return self.in_dim - 1 if self.time_input else self.in_dim

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in zip(self.weights, self.biases, strict=True):
            out.extend((w, b))
        return out

    def weight_count(self) -> int:
        return sum(w.size for w in self.weights)

    def bias_count(self) -> int:
        return sum(b.size for b in self.biases)


def init_siren(
    in_dim: int,
    d: int,
    n: int,
    out_dim: int,
    omega_first: float = DEFAULT_OMEGA,
    seed: int = 0,
    time_input: bool = True,
) -> SirenParams:
    """Create a SIREN with the uniform initialization that keeps activations normal.

    The first layer draws from U(-1/fan_in, 1/fan_in) and is scaled by
    omega_first at forward time; later layers draw from
    U(-sqrt(6/fan_in), sqrt(6/fan_in)). Biases start at zero.
    """
    if min(in_dim, n, out_dim) < 1 or d < 2:
        raise ContractError(
            f"invalid SIREN shape in_dim={in_dim} d={d} n={n} out_dim={out_dim}"
        )
    if time_input and in_dim < 2:
        raise ContractError("a time input needs at least one spatial column")
    rng = np.random.default_rng(seed)
    shapes = [(d, in_dim)] + [(d, d)] * n + [(out_dim, d)]
    params = SirenParams(in_dim, d, n, out_dim, float(omega_first), time_input)
    for i, (rows, fan_in) in enumerate(shapes):
        bound = 1.0 / fan_in if i == 0 else float(np.sqrt(6.0 / fan_in))
        params.weights.append(tn.parameter(rng.uniform(-bound, bound, size=(rows, fan_in))))
        params.biases.append(tn.parameter(np.zeros(rows)))
    return params


def _check_query(p: SirenParams, q: Tensor) -> None:
    if q.ndim != 2 or q.shape[1] != p.in_dim:
        raise ContractError(f"queries must be B x {p.in_dim}, got {q.shape}")
    if tn.is_checked() and not np.all(np.isfinite(q.data)):
        raise DomainError("non-finite query coordinates")


def _first_preactivation(p: SirenParams, q: Tensor) -> Tensor:
    return (q @ p.weights[0].T + p.biases[0]) * p.omega_first


def forward(p: SirenParams, q: Tensor | Array) -> Tensor:
    """Evaluate the network on a B x in_dim batch of queries."""
    q = tn.as_tensor(q)
    _check_query(p, q)
    h = tn.sin(_first_preactivation(p, q))
    for w, b in zip(p.weights[1:-1], p.biases[1:-1], strict=True):
        h = tn.sin(h @ w.T + b)
    return h @ p.weights[-1].T + p.biases[-1]


def forward_with_jacobian(p: SirenParams, q: Tensor | Array) -> tuple[Tensor, Tensor]:
    """Return the output and its B x out_dim x S spatial Jacobian in one pass.

    The Jacobian is carried as an S x B x d stack so every layer reduces to a
    plain 2-D matrix product.
    """
    q = tn.as_tensor(q)
    _check_query(p, q)
    s, batch, d = p.spatial_dim, q.shape[0], p.hidden_dim

    z = _first_preactivation(p, q)
    # d z0 / d x_k = omega * W0[:, k]
    seed_rows = (p.weights[0][:, :s] * p.omega_first).T.reshape(s, 1, d)
    jac = tn.cos(z) * seed_rows
    h = tn.sin(z)
    for w, b in zip(p.weights[1:-1], p.biases[1:-1], strict=True):
        z = h @ w.T + b
        jac = tn.cos(z) * (jac.reshape(s * batch, d) @ w.T).reshape(s, batch, d)
        h = tn.sin(z)
    w_out = p.weights[-1]
    out = h @ w_out.T + p.biases[-1]
    jac_out = (jac.reshape(s * batch, d) @ w_out.T).reshape(s, batch, p.out_dim)
    return out, jac_out.transpose(1, 2, 0)


def spatial_jacobian(p: SirenParams, q: Tensor | Array) -> Tensor:
    """d(output)/d(spatial input) as a B x out_dim x S tensor."""
    return forward_with_jacobian(p, q)[1]


def finite_difference_jacobian(
    p: SirenParams, q: Tensor | Array, step: float = 1e-5
) -> tuple[Tensor, Tensor]:
    """Reference Jacobian from central differences of forward, one axis at a time.

    Built from tape primitives as well, so it is a drop-in (slower, approximate)
    replacement for the analytical path.
    """
    q = tn.as_tensor(q)
    out = forward(p, q)
    columns = []
    for k in range(p.spatial_dim):
        offset = np.zeros((1, p.in_dim))
        offset[0, k] = step
        diff = forward(p, q.data + offset) - forward(p, q.data - offset)
        columns.append(diff / (2.0 * step))
    return out, tn.stack(columns, axis=-1)


JacobianMethod = Literal["analytical", "finite-difference"]


def output_and_jacobian(
    p: SirenParams, q: Tensor | Array, method: JacobianMethod = "analytical"
) -> tuple[Tensor, Tensor]:
    if method == "analytical":
        return forward_with_jacobian(p, q)
    if method == "finite-difference":
        return finite_difference_jacobian(p, q)
    raise ContractError(f"Unknown Jacobian method: {method}")


def spectral_norm(
    matrix: Array, max_iter: int = 1000, tol: float = 1e-10, seed: int = 0
) -> float:
    """Largest singular value by power iteration on M^T M."""
    m = np.asarray(matrix, dtype=np.float64)
    if not np.any(m):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for i in range(max_iter):
        w = m.T @ (m @ v)
        length = float(np.linalg.norm(w))
        if length == 0.0:
            return 0.0
        v = w / length
        estimate = float(np.sqrt(length))
        if i >= 100 and abs(estimate - sigma) <= tol * max(estimate, 1.0):
            sigma = estimate
            break
        sigma = estimate
    return float(np.linalg.norm(m @ v))


def spectral_bound(p: SirenParams) -> float:
    """Upper bound d^n * prod ||W_i||_2 on the spectral norm of the spatial Jacobian.

    The first factor uses omega_first * W0, the matrix actually applied.
    """
    norms = [spectral_norm(w.data) for w in p.weights]
    norms[0] *= abs(p.omega_first)
    return float(p.hidden_dim**p.n_hidden * np.prod(norms))


def output_dim(variant: Variant, spatial_dim: int = 3) -> int:
    """Raw output width of the network behind a variant's head."""
    rotation = 6 if spatial_dim == 3 else 2
    widths = {
        Variant.TRANS: spatial_dim,
        Variant.SE3: rotation + spatial_dim,
        Variant.SCALED_SE3: rotation + 1 + spatial_dim,
        Variant.AFFINITY: spatial_dim * spatial_dim + spatial_dim,
        Variant.DPF: spatial_dim,
    }
    if spatial_dim not in (2, 3):
        raise ContractError(f"spatial_dim must be 2 or 3, got {spatial_dim}")
    try:
        return widths[Variant(variant)]
    except KeyError:
        raise ContractError(f"{variant} is not a SIREN-backed variant") from None


def param_count(
    variant: Variant, d: int, n: int, n_frames: int | None = None, spatial_dim: int = 3
) -> int:
    """Weight entries of a variant's SIREN(s); biases are not counted.

    For 3-D fields this is 7d+nd^2 (Trans), 13d+nd^2 (SE3), 14d+nd^2
    (ScaledSE3), 16d+nd^2 (Affinity) and (6d+nd^2)(T-1) for per-frame DPF.
    """
    variant = Variant(variant)
    out = output_dim(variant, spatial_dim)
    if variant is Variant.DPF:
        if n_frames is None or n_frames < 2:
            raise ContractError(f"per-frame DPF needs at least 2 frames, got {n_frames}")
        return ((spatial_dim + out) * d + n * d * d) * (n_frames - 1)
    return (spatial_dim + 1 + out) * d + n * d * d
