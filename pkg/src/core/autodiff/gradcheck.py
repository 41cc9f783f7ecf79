"""Central finite-difference checks for reverse-mode gradients."""

from typing import Callable, Dict, Sequence

import numpy as np

from src.core.autodiff.tensor import Tensor, backward, no_grad

DEFAULT_STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|, 1e-8)`` under the Frobenius norm."""
    diff = np.linalg.norm(analytic - numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(diff / denom)


def numerical_gradient(
    fn: Callable[[], Tensor], param: Tensor, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Estimate d fn() / d param entrywise by central differences.

    ``fn`` must recompute its output from ``param.values`` on every call.
    """
    grad = np.zeros_like(param.values)
    with no_grad():
        for index in np.ndindex(*param.values.shape):
            original = param.values[index]
            param.values[index] = original + step
            plus = fn().item()
            param.values[index] = original - step
            minus = fn().item()
            param.values[index] = original
            grad[index] = (plus - minus) / (2.0 * step)
    return grad


def analytic_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    """Run one backward pass and return a copy of each parameter's gradient, keyed by position."""
    for p in params:
        p.zero_grad()
    backward(fn())
    return {
        i: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values))
        for i, p in enumerate(params)
    }


def check_gradients(
    fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = DEFAULT_STEP
) -> float:
    """Largest relative error between analytic and numerical gradients over ``params``."""
    analytic = analytic_gradients(fn, params)
    worst = 0.0
    for i, p in enumerate(params):
        worst = max(worst, relative_error(analytic[i], numerical_gradient(fn, p, step)))
    return worst
