"""Stride-32 convolutional feature extractor: five 3x3 stride-2 stages."""
from __future__ import annotations

import numpy as np

from ..numerics import Tensor, conv2d, reduce_mean, relu, uniform

STRIDE = 32


def init_backbone(params: dict, rng: np.random.Generator, channels=(16, 32, 64, 64, 64), prefix="backbone"):
    c_in = 3
    for i, c in enumerate(channels):
        fan_in = c_in * 9
        params[f"{prefix}.conv{i}.w"] = uniform(rng, (c, c_in, 3, 3), fan_in, f"{prefix}.conv{i}.w")
        params[f"{prefix}.conv{i}.b"] = uniform(rng, (c,), fan_in, f"{prefix}.conv{i}.b")
        c_in = c
    return params


def _stages(params: dict, prefix: str) -> int:
    n = 0
    while f"{prefix}.conv{n}.w" in params:
        n += 1
    return n


def as_batch(img) -> Tensor:
    """Accept a single (3, H, W) image or a (B, 3, H, W) batch."""
    t = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float64))
    if t.data.ndim == 3:
        t = Tensor(t.data[None])
    if t.data.ndim != 4 or t.shape[1] != 3:
        raise ValueError(f"expected (B, 3, H, W) images, got shape {t.shape}")
    return t


def backbone_forward(params: dict, img, prefix: str = "backbone") -> Tensor:
    """(B, 3, H0, W0) -> (B, c, H0/32, W0/32)."""
    x = as_batch(img)
    h, w = x.shape[2:]
    if h % STRIDE or w % STRIDE:
        raise ValueError(f"image extent {h}x{w} is not divisible by {STRIDE}")
    for i in range(_stages(params, prefix)):
        x = relu(conv2d(x, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"], stride=2, pad=1))
    return x


def global_pool(feat: Tensor) -> Tensor:
    """Spatial mean, (B, c, H, W) -> (B, c)."""
    return reduce_mean(feat, axis=(2, 3))
