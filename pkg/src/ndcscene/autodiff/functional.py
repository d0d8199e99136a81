"""Differentiable operations on :class:`~ndcscene.autodiff.tensor.Tensor`.

Shapes must match exactly; the only implicit broadcast is the per-channel
affine in :func:`channel_affine`. Anything else goes through :func:`expand`.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import Function, Tensor


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class Add(Function):
    def forward(self, a, b):
        _check_same(a, b, "add")
        return a + b

    def backward(self, g):
        return g, g


class Sub(Function):
    def forward(self, a, b):
        _check_same(a, b, "sub")
        return a - b

    def backward(self, g):
        return g, -g


class Mul(Function):
    def forward(self, a, b):
        _check_same(a, b, "mul")
        self.save_for_backward(a, b)
        return a * b

    def backward(self, g):
        a, b = self.saved
        return g * b, g * a


class Scale(Function):
    def forward(self, x, factor):
        self.factor = factor
        return x * x.dtype.type(factor)

    def backward(self, g):
        return (g * g.dtype.type(self.factor),)


class Relu(Function):
    def forward(self, x):
        mask = x > 0
        self.save_for_backward(mask)
        return np.where(mask, x, x.dtype.type(0))

    def backward(self, g):
        (mask,) = self.saved
        return (np.where(mask, g, g.dtype.type(0)),)


class ChannelAffine(Function):
    """``gamma[c] * x[c, ...] + beta[c]``; either parameter may be absent."""

    def forward(self, x, *params, has_gamma, has_beta):
        self.has_gamma, self.has_beta = has_gamma, has_beta
        view = (-1,) + (1,) * (x.ndim - 1)
        out = x
        it = iter(params)
        gamma = next(it) if has_gamma else None
        beta = next(it) if has_beta else None
        for p in (gamma, beta):
            if p is not None and p.shape != (x.shape[0],):
                raise ValueError(f"channel_affine: parameter shape {p.shape} does not match {x.shape[0]} channels")
        if gamma is not None:
            out = out * gamma.reshape(view)
        if beta is not None:
            out = out + beta.reshape(view)
        self.save_for_backward(x, gamma)
        return out

    def backward(self, g):
        x, gamma = self.saved
        axes = tuple(range(1, g.ndim))
        view = (-1,) + (1,) * (g.ndim - 1)
        grads = [g * gamma.reshape(view) if gamma is not None else g]
        if self.has_gamma:
            grads.append(np.sum(g.astype(np.float64) * x, axis=axes))
        if self.has_beta:
            grads.append(np.sum(g, axis=axes, dtype=np.float64))
        return grads


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        self.save_for_backward(a, b)
        return a @ b

    def backward(self, g):
        a, b = self.saved
        return g @ b.T, a.T @ g


class Reshape(Function):
    def forward(self, x, shape):
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != x.size:
            raise ValueError(f"reshape: cannot view {x.shape} as {shape}")
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, g):
        return (g.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x, axes):
        self.axes = tuple(axes)
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, g):
        return (np.ascontiguousarray(np.transpose(g, np.argsort(self.axes))),)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        ref = list(arrays[0].shape)
        for a in arrays[1:]:
            other = list(a.shape)
            if len(other) != len(ref) or any(r != o for i, (r, o) in enumerate(zip(ref, other)) if i != axis % len(ref)):
                raise ValueError(f"concat: incompatible shapes {arrays[0].shape} and {a.shape} along axis {axis}")
        return np.concatenate(arrays, axis=axis)

    def backward(self, g):
        splits = np.cumsum(self.sizes)[:-1]
        return [np.ascontiguousarray(p) for p in np.split(g, splits, axis=self.axis)]


class Crop(Function):
    def forward(self, x, index):
        self.in_shape = x.shape
        self.index = index
        return np.ascontiguousarray(x[index])

    def backward(self, g):
        out = np.zeros(self.in_shape, dtype=g.dtype)
        out[self.index] = g
        return (out,)


class Expand(Function):
    """Insert a new axis of length ``n`` by repetition."""

    def forward(self, x, axis, n):
        self.axis = axis
        return np.ascontiguousarray(np.repeat(np.expand_dims(x, axis), n, axis=axis))

    def backward(self, g):
        return (np.sum(g, axis=self.axis, dtype=np.float64).astype(g.dtype),)


class SumAxis(Function):
    def forward(self, x, axis):
        self.axis, self.in_shape = axis, x.shape
        return np.sum(x, axis=axis, dtype=np.float64).astype(x.dtype)

    def backward(self, g):
        return (np.ascontiguousarray(np.broadcast_to(np.expand_dims(g, self.axis), self.in_shape)),)


class Sum(Function):
    def forward(self, x):
        self.in_shape = x.shape
        return np.asarray(np.sum(x, dtype=np.float64), dtype=x.dtype)

    def backward(self, g):
        return (np.full(self.in_shape, g, dtype=g.dtype),)


class Mean(Function):
    def forward(self, x):
        self.in_shape = x.shape
        return np.asarray(np.mean(x, dtype=np.float64), dtype=x.dtype)

    def backward(self, g):
        n = int(np.prod(self.in_shape))
        return (np.full(self.in_shape, g / n, dtype=g.dtype),)


class Einsum(Function):
    """Two-operand einsum with no indices private to a single input."""

    def forward(self, a, b, subscripts):
        lhs, out = subscripts.replace(" ", "").split("->")
        sa, sb = lhs.split(",")
        for s, other in ((sa, sb), (sb, sa)):
            if len(set(s)) != len(s):
                raise ValueError(f"einsum: repeated index in {s!r}")
            if any(c not in out and c not in other for c in s):
                raise ValueError(f"einsum: index private to one operand in {subscripts!r}")
        self.sa, self.sb, self.so = sa, sb, out
        self.save_for_backward(a, b)
        return np.einsum(f"{sa},{sb}->{out}", a, b, optimize=True)

    def backward(self, g):
        a, b = self.saved
        ga = np.einsum(f"{self.so},{self.sb}->{self.sa}", g, b, optimize=True)
        gb = np.einsum(f"{self.so},{self.sa}->{self.sb}", g, a, optimize=True)
        return ga, gb


class Softmax(Function):
    def forward(self, x, axis):
        self.axis = axis
        z = x.astype(np.float64)
        z = z - np.max(z, axis=axis, keepdims=True)
        e = np.exp(z)
        y = (e / np.sum(e, axis=axis, keepdims=True)).astype(x.dtype)
        self.save_for_backward(y)
        return y

    def backward(self, g):
        (y,) = self.saved
        dot = np.sum(g.astype(np.float64) * y, axis=self.axis, keepdims=True)
        return ((y * (g - dot)).astype(g.dtype),)


class CrossEntropy(Function):
    """Weighted mean of ``-log softmax`` over the valid positions.

    ``logits`` is ``(K, ...)``; ``target`` and ``valid`` have the trailing
    shape. The mean is normalized by the summed weights of valid positions.
    """

    def forward(self, logits, target, valid, class_weights):
        K = logits.shape[0]
        if target.shape != logits.shape[1:] or valid.shape != target.shape:
            raise ValueError(f"cross_entropy: target {target.shape} does not match logits {logits.shape}")
        z = logits.reshape(K, -1).astype(np.float64)
        t = target.reshape(-1).astype(np.int64)
        v = valid.reshape(-1).astype(bool)
        if not v.any():
            raise ValueError("cross_entropy: every position is masked as unknown")
        if t[v].min() < 0 or t[v].max() >= K:
            raise ValueError("cross_entropy: target label out of range")
        w_cls = np.ones(K) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
        z = z - z.max(axis=0, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=0))
        cols = np.nonzero(v)[0]
        tv = t[cols]
        w = w_cls[tv]
        total = w.sum()
        nll = logsum[cols] - z[tv, cols]
        loss = float(np.sum(w * nll) / total)
        self.save_for_backward(z, logsum, cols, tv, w / total, logits.shape)
        return np.asarray(loss, dtype=logits.dtype)

    def backward(self, g):
        z, logsum, cols, tv, scale, shape = self.saved
        grad = np.zeros_like(z)
        p = np.exp(z[:, cols] - logsum[cols])
        p[tv, np.arange(len(cols))] -= 1.0
        grad[:, cols] = p * scale
        return (grad.reshape(shape).astype(g.dtype) * g,)


class Gather(Function):
    """Fixed sparse linear map over the flattened spatial axes.

    ``out[c, n] = sum_t w[n, t] * x[c, idx[n, t]]``; used for bilinear and
    trilinear resampling where ``idx``/``w`` depend only on geometry.
    """

    def forward(self, x, idx, w, out_shape):
        C = x.shape[0]
        self.in_shape = x.shape
        self.idx, self.w = idx, w
        flat = x.reshape(C, -1)
        if idx.size and (idx.min() < 0 or idx.max() >= flat.shape[1]):
            raise IndexError("gather: index outside the source volume")
        return kernels.gather_weighted(flat, idx, w).reshape((C,) + tuple(out_shape))

    def backward(self, g):
        C = g.shape[0]
        nsrc = int(np.prod(self.in_shape[1:]))
        src = kernels.scatter_weighted(g.reshape(C, -1), self.idx, self.w, nsrc)
        return (src.reshape(self.in_shape),)


# functional wrappers ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def channel_affine(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None) -> Tensor:
    params = [p for p in (gamma, beta) if p is not None]
    return ChannelAffine.apply(x, *params, has_gamma=gamma is not None, has_beta=beta is not None)


def layer_scale(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel affine normalization (stands in for batch norm at batch size 1)."""
    return channel_affine(x, gamma, beta)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def reshape(x: Tensor, shape) -> Tensor:
    return Reshape.apply(x, shape=shape)


def transpose(x: Tensor, axes) -> Tensor:
    return Transpose.apply(x, axes=axes)


def concat(tensors, axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def crop(x: Tensor, index) -> Tensor:
    """Differentiable basic slicing, e.g. ``crop(x, np.s_[:, 1:3])``."""
    return Crop.apply(x, index=index)


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    return Expand.apply(x, axis=axis, n=n)


def sum_axis(x: Tensor, axis: int) -> Tensor:
    return SumAxis.apply(x, axis=axis)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return Sum.apply(x)


def mean(x: Tensor) -> Tensor:
    return Mean.apply(x)


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    return Einsum.apply(a, b, subscripts=subscripts)


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax: axis {axis} out of range for rank {x.ndim}")
    return Softmax.apply(x, axis=axis)


def cross_entropy(logits: Tensor, target: np.ndarray, valid: np.ndarray | None = None, class_weights=None) -> Tensor:
    target = np.asarray(target)
    valid = np.ones(target.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    return CrossEntropy.apply(logits, target=target, valid=valid, class_weights=class_weights)


def gather(x: Tensor, idx: np.ndarray, w: np.ndarray, out_shape) -> Tensor:
    return Gather.apply(x, idx=idx, w=w, out_shape=out_shape)
