"""Shared numerical oracles for the test suite."""

from collections.abc import Callable, Sequence

import numpy as np

from motionfield.core import tensor as tn
from motionfield.core.tensor import Array, Tensor


def numeric_grad(f: Callable[[], float], param: Tensor, step: float = 1e-6) -> Array:
    """Central-difference gradient of a scalar function with respect to param.data."""
    grad = np.zeros(param.shape)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = f()
        flat[i] = orig - step
        minus = f()
        flat[i] = orig
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
    return grad


def analytic_grads(loss_fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[Array]:
    """Gradients of loss_fn() from one backward pass, zeros where none flowed."""
    tn.zero_grad(params)
    loss_fn().backward()
    return [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]


def relative_error(a: Array, b: Array) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-8)
    return float(np.linalg.norm(a - b)) / scale


def assert_grads_match(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    tol: float = 1e-5,
    step: float = 1e-6,
) -> None:
    """Check backward against central differences for every parameter."""
    analytic = analytic_grads(loss_fn, params)
    for p, g in zip(params, analytic, strict=True):
        expected = numeric_grad(lambda: loss_fn().item(), p, step)
        assert relative_error(g, expected) <= tol


def numeric_jacobian(f: Callable[[Array], Array], x: Array, step: float = 1e-6) -> Array:
    """B x out x S Jacobian of a row-wise map by central differences on each column of x."""
    columns = []
    for k in range(x.shape[1]):
        offset = np.zeros_like(x)
        offset[:, k] = step
        columns.append((f(x + offset) - f(x - offset)) / (2.0 * step))
    return np.stack(columns, axis=-1)
