"""Dense tensors with reverse-mode gradients.

A :class:`Tensor` wraps a contiguous numpy array. Every differentiable
operation is a :class:`Function` subclass; applying one records the function
as the output's creator, which makes the creators form a DAG. Calling
:meth:`Tensor.backward` on a scalar walks that DAG once in reverse
topological order and then releases the saved activations, so a second
backward over the same graph is an error.
"""

from __future__ import annotations

import contextlib
import logging
from typing import Any, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_state = {"dtype": np.float32, "grad_enabled": True, "debug": False}


def default_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype new tensors are created with.

    Gradient checks run in float64 so that central differences are not
    swamped by float32 rounding.
    """
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


def set_debug(flag: bool) -> None:
    """When on, every op output is checked for NaN/Inf."""
    _state["debug"] = bool(flag)


class GraphError(RuntimeError):
    pass


class Function:
    """Base class for differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward`` returning
    one gradient (or None) per input tensor.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.saved: tuple = ()
        self.released = False

    def save_for_backward(self, *arrays: Any) -> None:
        self.saved = arrays

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if _state["debug"] and not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{cls.__name__} produced non-finite values")
        requires_grad = _state["grad_enabled"] and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires_grad, _creator=fn if requires_grad else None)
        fn._out_id = id(result)
        return result


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_creator", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, _creator: Function | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(_state["dtype"])
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._creator = _creator
        self.name = name

    # construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, shape, requires_grad=False, name=None):
        return cls(np.zeros(shape, dtype=_state["dtype"]), requires_grad, name)

    @classmethod
    def ones(cls, shape, requires_grad=False, name=None):
        return cls(np.ones(shape, dtype=_state["dtype"]), requires_grad, name)

    @classmethod
    def from_numpy(cls, arr, requires_grad=False, name=None):
        return cls(np.asarray(arr, dtype=_state["dtype"]), requires_grad, name)

    # basic properties -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic sugar ------------------------------------------------------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, _as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, _as_tensor(other, self))

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        from . import functional as F

        if np.isscalar(other):
            return F.scale(self, float(other))
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def sum(self):
        from . import functional as F

        return F.sum(self)

    def mean(self):
        from . import functional as F

        return F.mean(self)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    # reverse mode -----------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires grad."""
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        if any(fn.released for fn in order):
            raise GraphError("graph already consumed by a previous backward(); rebuild it with a new forward pass")
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for fn in reversed(order):
            out_id = fn._out_id
            g = grads.pop(out_id, None)
            fn.released = True
            if g is None:
                fn.saved = ()
                continue
            in_grads = fn.backward(g)
            fn.saved = ()
            for t, gi in zip(fn.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                gi = np.asarray(gi, dtype=t.data.dtype)
                if gi.shape != t.shape:
                    raise GraphError(f"{type(fn).__name__} returned grad {gi.shape} for input {t.shape}")
                if t._creator is None:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
                else:
                    prev = grads.get(id(t))
                    grads[id(t)] = gi if prev is None else prev + gi


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, x, dtype=like.data.dtype))


def _topological(root: Tensor) -> list[Function]:
    """Creators reachable from ``root``; every node follows all nodes it depends on."""
    order: list[Function] = []
    seen: set[int] = set()
    if root._creator is None:
        return order
    stack: list[tuple[Function, bool]] = [(root._creator, False)]
    while stack:
        fn, expanded = stack.pop()
        if expanded:
            order.append(fn)
            continue
        if id(fn) in seen:
            continue
        seen.add(id(fn))
        stack.append((fn, True))
        for t in fn.inputs:
            if t._creator is not None and id(t._creator) not in seen:
                stack.append((t._creator, False))
    return order
