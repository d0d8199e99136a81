"""Hot loops behind convolution and resampling, with a compiled fast path.

The Cython extension ``ndcscene._kernels`` is used when it has been built;
otherwise the numpy implementations below take over. Set
``NDCSCENE_KERNELS=numpy`` to force the fallback. Both backends accumulate in
the same order, so they agree bit-for-bit on identical inputs.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKEND = "cython" if _compiled is not None and os.environ.get("NDCSCENE_KERNELS", "") != "numpy" else "numpy"


def available_backends() -> list[str]:
    return ["numpy"] + (["cython"] if _compiled is not None else [])


def use_backend(name: str) -> None:
    """Switch the active backend at runtime (used by tests and the benchmark)."""
    global BACKEND
    if name not in available_backends():
        raise ValueError(f"kernel backend {name!r} is not available; have {available_backends()}")
    BACKEND = name


# numpy fallbacks -----------------------------------------------------------


def _np_im2col(xp, ksize, stride, out_shape):
    kx, ky, kz = ksize
    ox, oy, oz = out_shape
    cols = np.empty((xp.shape[0], kx, ky, kz, ox, oy, oz), dtype=xp.dtype)
    for a, b, e in itertools.product(range(kx), range(ky), range(kz)):
        cols[:, a, b, e] = xp[
            :,
            a : a + stride * (ox - 1) + 1 : stride,
            b : b + stride * (oy - 1) + 1 : stride,
            e : e + stride * (oz - 1) + 1 : stride,
        ]
    return cols


def _np_col2im(cols, padded_shape, stride):
    C, kx, ky, kz, ox, oy, oz = cols.shape
    xp = np.zeros((C,) + tuple(padded_shape), dtype=cols.dtype)
    for a, b, e in itertools.product(range(kx), range(ky), range(kz)):
        xp[
            :,
            a : a + stride * (ox - 1) + 1 : stride,
            b : b + stride * (oy - 1) + 1 : stride,
            e : e + stride * (oz - 1) + 1 : stride,
        ] += cols[:, a, b, e]
    return xp


def _np_gather(src, idx, w):
    acc = np.zeros((src.shape[0], idx.shape[0]), dtype=np.float64)
    for t in range(idx.shape[1]):
        acc += w[:, t].astype(np.float64) * src[:, idx[:, t]].astype(np.float64)
    return acc.astype(src.dtype)


def _np_scatter(g, idx, w, nsrc):
    flat_idx = idx.ravel()
    w64 = w.astype(np.float64)
    out = np.empty((g.shape[0], nsrc), dtype=np.float64)
    for c in range(g.shape[0]):
        weights = (w64 * g[c].astype(np.float64)[:, None]).ravel()
        out[c] = np.bincount(flat_idx, weights=weights, minlength=nsrc)
    return out.astype(g.dtype)


# public entry points ---------------------------------------------------------


def im2col(xp: np.ndarray, ksize, stride: int, out_shape) -> np.ndarray:
    """Unfold a padded ``(C, X, Y, Z)`` array into ``(C, kx, ky, kz, ox, oy, oz)`` patches."""
    if BACKEND == "cython":
        return _compiled.im2col_3d(np.ascontiguousarray(xp), *ksize, stride, *out_shape)
    return _np_im2col(xp, ksize, stride, out_shape)


def col2im(cols: np.ndarray, padded_shape, stride: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: sum patches back into a padded ``(C, X, Y, Z)`` array."""
    if BACKEND == "cython":
        return _compiled.col2im_3d(np.ascontiguousarray(cols), *padded_shape, stride)
    return _np_col2im(cols, padded_shape, stride)


def gather_weighted(src: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[c, n] = sum_t w[n, t] * src[c, idx[n, t]]`` with 64-bit accumulation."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if BACKEND == "cython":
        return _compiled.gather_weighted(np.ascontiguousarray(src), idx, w)
    return _np_gather(src, idx, w)


def scatter_weighted(g: np.ndarray, idx: np.ndarray, w: np.ndarray, nsrc: int) -> np.ndarray:
    """Adjoint of :func:`gather_weighted` with respect to ``src``."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if BACKEND == "cython":
        return _compiled.scatter_weighted(np.ascontiguousarray(g), idx, w, nsrc)
    return _np_scatter(g, idx, w, nsrc)
