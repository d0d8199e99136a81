"""Convolutional building blocks."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, add, channel_affine, concat, conv2d, conv3d, deconv, relu
from ..autodiff.nn import Module, constant, he_normal


class Conv(Module):
    """Convolution followed by a per-channel affine (the layer-scale normalization)."""

    def __init__(self, rng, cin, cout, k=3, stride=1, nd=2, gamma=1.0):
        super().__init__()
        self.w = he_normal(rng, (cout, cin) + (k,) * nd, cin * k**nd, name="w")
        self.gamma = constant((cout,), gamma, name="gamma")
        self.beta = constant((cout,), 0.0, name="beta")
        self.stride, self.pad, self.nd = stride, k // 2, nd

    def __call__(self, x: Tensor) -> Tensor:
        op = conv2d if self.nd == 2 else conv3d
        return channel_affine(op(x, self.w, stride=self.stride, padding=self.pad), self.gamma, self.beta)


class Up(Module):
    """Stride-2 transposed convolution (kernel 4) plus affine."""

    def __init__(self, rng, cin, cout, nd=2):
        super().__init__()
        # kernel layout (C_in, C_out, k...); each output sees 2^nd taps per input channel
        self.w = he_normal(rng, (cin, cout) + (4,) * nd, cin * 2**nd, name="w")
        self.gamma = constant((cout,), 1.0, name="gamma")
        self.beta = constant((cout,), 0.0, name="beta")

    def __call__(self, x: Tensor) -> Tensor:
        return channel_affine(deconv(x, self.w), self.gamma, self.beta)


class ResUnit2d(Module):
    """Two 3x3 convolutions with an identity shortcut."""

    def __init__(self, rng, c):
        super().__init__()
        self.a = Conv(rng, c, c, 3)
        self.b = Conv(rng, c, c, 3, gamma=0.1)

    def __call__(self, x: Tensor) -> Tensor:
        return relu(add(x, self.b(relu(self.a(x)))))


class Bottleneck3d(Module):
    """1x1x1 reduce, 3x3x3, 1x1x1 expand, identity shortcut."""

    def __init__(self, rng, c, mid=None):
        super().__init__()
        mid = mid or max(c // 2, 1)
        self.reduce = Conv(rng, c, mid, 1, nd=3)
        self.conv = Conv(rng, mid, mid, 3, nd=3)
        self.expand = Conv(rng, mid, c, 1, nd=3, gamma=0.1)

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.reduce(x))
        h = relu(self.conv(h))
        return relu(add(x, self.expand(h)))


def coord_planes(h: int, w: int, dtype) -> np.ndarray:
    """Normalized pixel-center coordinates in [-1, 1], shape ``(2, h, w)``."""
    ys = (np.arange(h) + 0.5) / h * 2 - 1
    xs = (np.arange(w) + 0.5) / w * 2 - 1
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([X, Y]).astype(dtype)


class Encoder2d(Module):
    """Residual stages at strides 1, 2, 4, ...; returns every stage's output."""

    def __init__(self, rng, channels, coord_channels=True):
        super().__init__()
        self.coord = coord_channels
        cin = 3 + (2 if coord_channels else 0)
        self.stages = []
        for i, c in enumerate(channels):
            stem = self.add_module(f"stem{i}", Conv(rng, cin, c, 3, stride=1 if i == 0 else 2))
            unit = self.add_module(f"unit{i}", ResUnit2d(rng, c))
            self.stages.append((stem, unit))
            cin = c

    def __call__(self, image: Tensor) -> list[Tensor]:
        x = image
        if self.coord:
            _, h, w = image.shape
            x = concat([image, Tensor(coord_planes(h, w, image.data.dtype))], axis=0)
        outs = []
        for stem, unit in self.stages:
            x = unit(relu(stem(x)))
            outs.append(x)
        return outs


class LightUnet3d(Module):
    """One stride-2 conv down, residual units, one stride-2 deconv up, skip add."""

    def __init__(self, rng, c, mid, blocks=1):
        super().__init__()
        self.down = Conv(rng, c, mid, 3, stride=2, nd=3)
        self.blocks = [self.add_module(f"block{i}", Bottleneck3d(rng, mid)) for i in range(blocks)]
        self.up = Up(rng, mid, c, nd=3)

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.down(x))
        for b in self.blocks:
            h = b(h)
        return relu(add(x, self.up(h)))


class HeavyUnet3d(Module):
    """Two-level UNet used by the feature-ablation variant in place of the 3D decoder."""

    def __init__(self, rng, c, width, blocks=1):
        super().__init__()
        w1, w2 = 2 * width, 4 * width
        self.down1 = Conv(rng, c, w1, 3, stride=2, nd=3)
        self.enc1 = [self.add_module(f"enc1_{i}", Bottleneck3d(rng, w1)) for i in range(blocks)]
        self.down2 = Conv(rng, w1, w2, 3, stride=2, nd=3)
        self.mid = [self.add_module(f"mid_{i}", Bottleneck3d(rng, w2)) for i in range(blocks)]
        self.up2 = Up(rng, w2, w1, nd=3)
        self.dec1 = [self.add_module(f"dec1_{i}", Bottleneck3d(rng, w1)) for i in range(blocks)]
        self.up1 = Up(rng, w1, c, nd=3)

    @staticmethod
    def count(c: int, width: int, blocks: int) -> int:
        """Parameter count without instantiating."""
        w1, w2 = 2 * width, 4 * width

        def conv(ci, co, k):
            return co * ci * k**3 + 2 * co

        def bottleneck(ch):
            m = max(ch // 2, 1)
            return conv(ch, m, 1) + conv(m, m, 3) + conv(m, ch, 1)

        def up(ci, co):
            return ci * co * 64 + 2 * co

        return (
            conv(c, w1, 3)
            + blocks * bottleneck(w1)
            + conv(w1, w2, 3)
            + blocks * bottleneck(w2)
            + up(w2, w1)
            + blocks * bottleneck(w1)
            + up(w1, c)
        )

    def __call__(self, x: Tensor) -> Tensor:
        s1 = relu(self.down1(x))
        for b in self.enc1:
            s1 = b(s1)
        h = relu(self.down2(s1))
        for b in self.mid:
            h = b(h)
        h = relu(add(s1, self.up2(h)))
        for b in self.dec1:
            h = b(h)
        return relu(add(x, self.up1(h)))
