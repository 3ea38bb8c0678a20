"""Minimal reverse-mode differentiation over float64 numpy arrays.

A ``Tensor`` wraps a value array, a gradient buffer, and a closure that maps
the output adjoint to parent adjoints. :func:`backward` walks the recorded
graph once per call and *adds* the pass's adjoints into each node's ``grad``
buffer, so repeated backward calls accumulate until :meth:`Tensor.zero_grad`.

The primitive set is deliberately small: elementwise arithmetic, a fused
linear map, relu, axis softmax, reductions, row gather/scatter, reshape,
concat, and the two loss kernels (logistic and smooth-L1). Matrix products
go through ``einsum`` so results never depend on BLAS threading.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Node in the recorded computation graph."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self._parents = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    """Wrap a plain value as a constant leaf; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        parents=(a, b),
        vjp=lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data - b.data,
        parents=(a, b),
        vjp=lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        parents=(a, b),
        vjp=lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, parents=(a,), vjp=lambda g: (-g,))


def _weight_grad(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d(loss)/d(weight) with leading axes flattened away."""
    go = g.reshape(-1, g.shape[-1])
    xi = x.reshape(-1, x.shape[-1])
    return go.T @ xi


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``y[..., o] = sum_i x[..., i] * w[o, i] + b[o]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ValueError(
            f"linear: input width {x.data.shape[-1]} != weight in-dim {weight.data.shape[1]}"
        )
    y = np.einsum("...i,oi->...o", x.data, weight.data)
    if bias is None:
        return Tensor(
            y,
            parents=(x, weight),
            vjp=lambda g: (
                g @ weight.data,
                _weight_grad(g, x.data),
            ),
        )
    bias = as_tensor(bias)
    if bias.data.shape != (weight.data.shape[0],):
        raise ValueError("linear: bias shape must be (out,)")
    return Tensor(
        y + bias.data,
        parents=(x, weight, bias),
        vjp=lambda g: (
            g @ weight.data,
            _weight_grad(g, x.data),
            g.reshape(-1, g.shape[-1]).sum(axis=0),
        ),
    )


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return Tensor(np.where(mask, a.data, 0.0), parents=(a,), vjp=lambda g: (g * mask,))


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        inner = np.sum(g * y, axis=axis, keepdims=True)
        return (y * (g - inner),)

    return Tensor(y, parents=(a,), vjp=vjp)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    y = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor(y, parents=(a,), vjp=vjp)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    y = np.mean(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy() / count,)

    return Tensor(y, parents=(a,), vjp=vjp)


def reduce_max(a, axis: int) -> Tensor:
    """Max along one axis; the gradient routes to the first argmax only."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    y = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def vjp(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(
            gx, np.expand_dims(idx, axis), np.expand_dims(np.asarray(g), axis), axis=axis
        )
        return (gx,)

    return Tensor(y, parents=(a,), vjp=vjp)


def gather(a, indices) -> Tensor:
    """Select rows along axis 0; backward scatter-adds into the source."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"gather index out of range for {a.data.shape[0]} rows")

    def vjp(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor(a.data[idx], parents=(a,), vjp=vjp)


def slice_last(a, start: int, stop: int) -> Tensor:
    """Contiguous slice along the last axis; backward zero-pads the rest."""
    a = as_tensor(a)
    width = a.data.shape[-1]
    if not 0 <= start < stop <= width:
        raise ValueError(f"slice [{start}:{stop}] out of range for width {width}")

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[..., start:stop] = g
        return (gx,)

    return Tensor(a.data[..., start:stop], parents=(a,), vjp=vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        a.data.reshape(shape), parents=(a,), vjp=lambda g: (g.reshape(a.data.shape),)
    )


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors), vjp=vjp)


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross-entropy on raw logits (stable form)."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    x = logits.data
    value = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    # sigmoid via exp(-|x|) only, so extreme logits cannot overflow
    e = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor(value, parents=(logits,), vjp=lambda g: (g * (sig - t),))


def smooth_l1(pred, target, beta: float = 1.0) -> Tensor:
    """Elementwise smooth-L1: quadratic within ``beta`` of the target, linear outside."""
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=np.float64)
    d = pred.data - t
    ad = np.abs(d)
    value = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    slope = np.clip(d / beta, -1.0, 1.0)
    return Tensor(value, parents=(pred,), vjp=lambda g: (g * slope,))


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's ``grad``.

    ``loss`` must be a finite scalar. Each call adds one pass's adjoints, so
    two calls on the same graph exactly double the gradients of one.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise ValueError("backward called on a non-finite loss")

    order = _topo_order(loss)
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        node.grad += g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None:
                continue
            acc = adjoint.get(id(parent))
            if acc is None:
                adjoint[id(parent)] = np.array(pg, dtype=np.float64, copy=True)
            else:
                acc += pg
