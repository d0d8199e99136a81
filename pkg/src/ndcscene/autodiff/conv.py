"""2D/3D convolution and stride-2 transposed convolution.

Both are lowered to im2col + one GEMM. 2D inputs get a unit depth axis so a
single set of volumetric kernels (:mod:`ndcscene.kernels`) serves both ranks.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import Function, Tensor


def _to3d(spatial):
    return tuple(spatial) + (1,) * (3 - len(spatial))


def _pad(x, padding, nd):
    if padding == 0:
        return x
    return np.pad(x, [(0, 0)] + [(padding, padding)] * nd + [(0, 0)] * (3 - nd))


def _unpad(xp, padding, nd):
    if padding == 0:
        return xp
    index = (slice(None),) + (slice(padding, -padding),) * nd
    return xp[index]


def conv_output_shape(spatial, ksize, stride, padding):
    out = []
    for s, k in zip(spatial, ksize):
        span = s + 2 * padding - k
        if span < 0:
            raise ValueError(f"conv: kernel {k} larger than padded extent {s + 2 * padding}")
        out.append(span // stride + 1)
    return tuple(out)


class ConvNd(Function):
    def forward(self, x, w, stride, padding):
        nd = x.ndim - 1
        if nd not in (2, 3) or w.ndim != nd + 2:
            raise ValueError(f"conv: input rank {x.ndim} and kernel rank {w.ndim} do not form a 2D/3D convolution")
        cin = x.shape[0]
        if w.shape[1] != cin:
            raise ValueError(f"conv: kernel expects {w.shape[1]} input channels, input has {cin}")
        if stride < 1 or padding < 0:
            raise ValueError("conv: stride must be >= 1 and padding >= 0")
        ksize = w.shape[2:]
        out_sp = conv_output_shape(x.shape[1:], ksize, stride, padding)
        self.stride, self.padding, self.nd = stride, padding, nd
        w2 = w.reshape(w.shape[0], -1)
        self.pointwise = all(k == 1 for k in ksize) and stride == 1 and padding == 0
        if self.pointwise:
            x2 = x.reshape(cin, -1)
            self.save_for_backward(x2, w2, w.shape, None, x.shape)
            return (w2 @ x2).reshape((w.shape[0],) + out_sp)
        xp = _pad(x.reshape((cin,) + _to3d(x.shape[1:])), padding, nd)
        cols = kernels.im2col(xp, _to3d(ksize), stride, _to3d(out_sp))
        cols2 = cols.reshape(cin * int(np.prod(ksize)), -1)
        self.save_for_backward(cols2, w2, w.shape, xp.shape, x.shape)
        return (w2 @ cols2).reshape((w.shape[0],) + out_sp)

    def backward(self, g):
        cols2, w2, wshape, xpshape, xshape = self.saved
        g2 = g.reshape(g.shape[0], -1)
        gw = (g2 @ cols2.T).reshape(wshape)
        if self.pointwise:
            return (w2.T @ g2).reshape(xshape), gw
        dcols = (w2.T @ g2).reshape((xshape[0],) + _to3d(wshape[2:]) + _to3d(g.shape[1:]))
        gxp = kernels.col2im(dcols, xpshape[1:], self.stride)
        gx = _unpad(gxp, self.padding, self.nd).reshape(xshape)
        return np.ascontiguousarray(gx), gw


class DeconvNd(Function):
    """Transposed convolution; kernel layout ``(C_in, C_out, k, ...)``.

    Identical to the input-gradient of a convolution whose kernel is the
    same array, which is what the tests check.
    """

    def forward(self, x, w, stride, padding):
        nd = x.ndim - 1
        if nd not in (2, 3) or w.ndim != nd + 2:
            raise ValueError(f"deconv: input rank {x.ndim} and kernel rank {w.ndim} do not form a 2D/3D deconvolution")
        if stride != 2:
            raise ValueError(f"deconv: unsupported stride {stride}; only 2 is implemented")
        cin, cout = w.shape[0], w.shape[1]
        if x.shape[0] != cin:
            raise ValueError(f"deconv: kernel expects {cin} input channels, input has {x.shape[0]}")
        ksize = w.shape[2:]
        in_sp = x.shape[1:]
        out_sp = tuple((s - 1) * stride - 2 * padding + k for s, k in zip(in_sp, ksize))
        if out_sp != tuple(s * stride for s in in_sp):
            raise ValueError(
                f"deconv: kernel {ksize} with padding {padding} gives {out_sp}, expected exactly stride x input"
            )
        x2 = x.reshape(cin, -1)
        w2 = w.reshape(cin, -1)
        cols = (w2.T @ x2).reshape((cout,) + _to3d(ksize) + _to3d(in_sp))
        padded = tuple(o + 2 * padding for o in out_sp) + (1,) * (3 - nd)
        yp = kernels.col2im(cols, padded, stride)
        self.save_for_backward(x2, w2, w.shape, x.shape)
        self.stride, self.padding, self.nd = stride, padding, nd
        return np.ascontiguousarray(_unpad(yp, self.padding, nd).reshape((cout,) + out_sp))

    def backward(self, g):
        x2, w2, wshape, xshape = self.saved
        cout = wshape[1]
        gp = _pad(g.reshape((cout,) + _to3d(g.shape[1:])), self.padding, self.nd)
        gcols = kernels.im2col(gp, _to3d(wshape[2:]), self.stride, _to3d(xshape[1:])).reshape(w2.shape[1], -1)
        gx = (w2 @ gcols).reshape(xshape)
        gw = (x2 @ gcols.T).reshape(wshape)
        return gx, gw


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 3:
        raise ValueError(f"conv2d expects (C, H, W) input, got {x.shape}")
    return ConvNd.apply(x, w, stride=stride, padding=padding)


def conv3d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"conv3d expects (C, X, Y, Z) input, got {x.shape}")
    return ConvNd.apply(x, w, stride=stride, padding=padding)


def deconv(x: Tensor, w: Tensor, stride: int = 2, padding: int | None = None) -> Tensor:
    """Stride-2 transposed convolution, 2D or 3D by input rank.

    ``padding`` defaults to the value that makes the output exactly
    ``stride`` times the input: 1 for kernel 4, 0 for kernel 2.
    """
    if padding is None:
        padding = (w.shape[2] - stride) // 2
    return DeconvNd.apply(x, w, stride=stride, padding=padding)
