"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-3, coords=None) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. ``x.data``, accumulated in float64.

    ``coords`` optionally restricts the probe to a subset of flat indices; the
    other entries of the result are NaN.
    """
    flat = x.data.reshape(-1)
    out = np.full(flat.shape, np.nan, dtype=np.float64)
    probe = range(flat.size) if coords is None else coords
    for i in probe:
        orig = flat[i]
        flat[i] = orig + h
        fp = np.float64(fn().data.reshape(-1)[0])
        flat[i] = orig - h
        fm = np.float64(fn().data.reshape(-1)[0])
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n||_inf / (||n||_inf + 1e-8)`` over the probed entries."""
    mask = ~np.isnan(numeric)
    a = np.asarray(analytic, dtype=np.float64)[mask]
    n = numeric[mask]
    return float(np.max(np.abs(a - n)) / (np.max(np.abs(n)) + 1e-8)) if n.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-3,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare backward() against central differences for every input.

    Returns the relative error per input (keyed by name or position).
    """
    for t in inputs:
        t.grad = None
    fn().backward()
    errors = {}
    for pos, t in enumerate(inputs):
        coords = None
        if max_coords is not None and t.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(t.size, size=max_coords, replace=False)
        num = numeric_grad(fn, t, h=h, coords=coords)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        errors[t.name or str(pos)] = relative_error(analytic, num)
    return errors
