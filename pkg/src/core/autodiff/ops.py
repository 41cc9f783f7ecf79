"""Differentiable primitives over 2-D tensors.

Every function validates shapes, computes the forward value with numpy and
registers a backward rule returning one gradient per input (``None`` where an
input receives no gradient).
"""

import math
from typing import Optional, Sequence

import numpy as np

from src.core.autodiff.tensor import Tensor
from src.domain.errors import DegenerateInputError, DimensionError

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def _broadcast_pair(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if b.rows == 1 and b.cols == a.cols:
        return
    if a.rows == 1 and a.cols == b.cols:
        return
    raise DimensionError(op, a.shape, b.shape)


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return grad.sum(axis=0, keepdims=True)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b``.

    Raises:
        DimensionError: If ``a.cols != b.rows``.
    """
    if a.cols != b.rows:
        raise DimensionError("matmul", a.shape, b.shape)
    av, bv = a.values, b.values

    def backward_fn(g: np.ndarray):
        return (g @ bv.T, av.T @ g)

    return Tensor.from_op(av @ bv, "matmul", (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; either side may be a 1xn row broadcast over the other."""
    _broadcast_pair("add", a, b)

    def backward_fn(g: np.ndarray):
        return (_reduce_to(g, a.shape), _reduce_to(g, b.shape))

    return Tensor.from_op(a.values + b.values, "add", (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with the same broadcasting as ``add``."""
    _broadcast_pair("sub", a, b)

    def backward_fn(g: np.ndarray):
        return (_reduce_to(g, a.shape), -_reduce_to(g, b.shape))

    return Tensor.from_op(a.values - b.values, "sub", (a, b), backward_fn)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product with the same broadcasting as ``add``."""
    _broadcast_pair("elementwise_mul", a, b)
    av, bv = a.values, b.values

    def backward_fn(g: np.ndarray):
        return (_reduce_to(g * bv, a.shape), _reduce_to(g * av, b.shape))

    return Tensor.from_op(av * bv, "elementwise_mul", (a, b), backward_fn)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of equally shaped tensors as a single node."""
    if not tensors:
        raise DegenerateInputError("add_n needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError("add_n", shape, t.shape)
    total = np.sum([t.values for t in tensors], axis=0)

    def backward_fn(g: np.ndarray):
        return [g] * len(tensors)

    return Tensor.from_op(total, "add_n", tensors, backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    c = float(factor)

    def backward_fn(g: np.ndarray):
        return (g * c,)

    return Tensor.from_op(x.values * c, "scale", (x,), backward_fn)


def scale_by(x: Tensor, s: Tensor) -> Tensor:
    """Multiply by a differentiable 1x1 tensor."""
    if s.shape != (1, 1):
        raise DimensionError("scale_by", x.shape, s.shape)
    xv, sv = x.values, s.values[0, 0]

    def backward_fn(g: np.ndarray):
        return (g * sv, np.array([[np.sum(g * xv)]]))

    return Tensor.from_op(xv * sv, "scale_by", (x, s), backward_fn)


def transpose(x: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray):
        return (g.T,)

    return Tensor.from_op(x.values.T.copy(), "transpose", (x,), backward_fn)


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    """Sum of all entries (1x1), of each column (``axis=0``) or of each row (``axis=1``)."""
    shape = x.shape
    if axis is None:
        out = np.array([[x.values.sum()]])
    else:
        out = x.values.sum(axis=axis, keepdims=True)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor.from_op(out, "sum", (x,), backward_fn)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    """Mean with the same axis convention as ``sum``."""
    count = x.values.size if axis is None else x.values.shape[axis]
    return scale(sum(x, axis), 1.0 / count)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation; the derivative is that of the approximation."""
    xv = x.values
    inner = _GELU_C * (xv + _GELU_K * xv**3)
    t = np.tanh(inner)
    out = 0.5 * xv * (1.0 + t)

    def backward_fn(g: np.ndarray):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_K * xv**2)
        local = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t**2) * d_inner
        return (g * local,)

    return Tensor.from_op(out, "gelu", (x,), backward_fn)


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax, stabilised by max subtraction."""
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward_fn(g: np.ndarray):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return Tensor.from_op(out, "log_softmax", (logits,), backward_fn)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax."""
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return Tensor.from_op(out, "softmax", (logits,), backward_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each row to zero mean and unit variance, then apply ``gain`` and ``bias`` (1xn)."""
    if gain.shape != (1, x.cols):
        raise DimensionError("layer_norm", x.shape, gain.shape)
    if bias.shape != (1, x.cols):
        raise DimensionError("layer_norm", x.shape, bias.shape)
    xv = x.values
    mu = xv.mean(axis=1, keepdims=True)
    centered = xv - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    gv = gain.values

    def backward_fn(g: np.ndarray):
        gx = g * gv
        dx = inv_std * (
            gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
        )
        return (dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True))

    return Tensor.from_op(xhat * gv + bias.values, "layer_norm", (x, gain, bias), backward_fn)


def embedding(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of ``table``; gradients scatter-add back into the gathered rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise DegenerateInputError("embedding needs a nonempty index sequence")
    if idx.min() < 0 or idx.max() >= table.rows:
        raise DimensionError("embedding", table.shape, (int(idx.min()), int(idx.max())))

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(table.values)
        np.add.at(grad, idx, g)
        return (grad,)

    return Tensor.from_op(table.values[idx], "embedding", (table,), backward_fn)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Horizontal concatenation of tensors with equal row counts."""
    if not tensors:
        raise DegenerateInputError("concat_cols needs at least one tensor")
    rows = tensors[0].rows
    for t in tensors[1:]:
        if t.rows != rows:
            raise DimensionError("concat_cols", tensors[0].shape, t.shape)
    bounds = np.cumsum([0] + [t.cols for t in tensors])

    def backward_fn(g: np.ndarray):
        return [g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors))]

    return Tensor.from_op(
        np.hstack([t.values for t in tensors]), "concat_cols", tensors, backward_fn
    )


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of ``x``."""
    if not 0 <= start < stop <= x.cols:
        raise DimensionError("slice_cols", x.shape, (start, stop))

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(x.values)
        grad[:, start:stop] = g
        return (grad,)

    return Tensor.from_op(x.values[:, start:stop].copy(), "slice_cols", (x,), backward_fn)


def _row_mask(op: str, rows: int, mask: Sequence[bool]) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.shape != (rows,):
        raise DimensionError(op, (rows, 1), (m.size, 1))
    if not m.any():
        raise DegenerateInputError(f"{op}: every position is masked out")
    return m


def nll_loss(log_probs: Tensor, targets: Sequence[int], mask: Sequence[bool]) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over the unmasked rows.

    Raises:
        DimensionError: If ``targets`` or ``mask`` do not have one entry per row.
        DegenerateInputError: If every row is masked out.
    """
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.shape != (log_probs.rows,):
        raise DimensionError("nll_loss", log_probs.shape, (tgt.size, 1))
    m = _row_mask("nll_loss", log_probs.rows, mask)
    rows = np.nonzero(m)[0]
    picked = log_probs.values[rows, tgt[rows]]
    count = rows.size

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(log_probs.values)
        grad[rows, tgt[rows]] = -g[0, 0] / count
        return (grad,)

    return Tensor.from_op(np.array([[-picked.sum() / count]]), "nll_loss", (log_probs,), backward_fn)


def kl_divergence(log_p_ref: Tensor, log_p_cur: Tensor, mask: Sequence[bool]) -> Tensor:
    """Mean over unmasked rows of KL(p_ref || p_cur).

    The reference side is a constant: no gradient flows into ``log_p_ref``.
    Entries where ``p_ref`` is zero contribute nothing, so clamped or infinite
    reference log-probabilities are accepted.
    """
    if log_p_ref.shape != log_p_cur.shape:
        raise DimensionError("kl_divergence", log_p_ref.shape, log_p_cur.shape)
    m = _row_mask("kl_divergence", log_p_cur.rows, mask)
    rows = np.nonzero(m)[0]
    ref_log = log_p_ref.values[rows]
    p_ref = np.exp(ref_log)
    support = p_ref > 0
    safe_ref_log = np.where(support, ref_log, 0.0)
    cur_log = log_p_cur.values[rows]
    safe_cur_log = np.where(support, cur_log, 0.0)
    terms = np.where(support, p_ref * (safe_ref_log - safe_cur_log), 0.0)
    count = rows.size

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(log_p_cur.values)
        grad[rows] = -p_ref * (g[0, 0] / count)
        return (None, grad)

    return Tensor.from_op(
        np.array([[terms.sum() / count]]), "kl_divergence", (log_p_ref, log_p_cur), backward_fn
    )


def frobenius_norm_sq(x: Tensor) -> Tensor:
    """Sum of squared entries."""
    xv = x.values

    def backward_fn(g: np.ndarray):
        return (2.0 * xv * g[0, 0],)

    return Tensor.from_op(np.array([[np.sum(xv * xv)]]), "frobenius_norm_sq", (x,), backward_fn)


def detach(x: Tensor) -> Tensor:
    """Leaf copy of ``x``; stops gradient flow."""
    return x.detach()


def constant(values, name: Optional[str] = None) -> Tensor:
    """A tensor that never requires gradients."""
    return Tensor(values, requires_grad=False, name=name)
