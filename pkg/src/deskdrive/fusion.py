"""Fusion of perception output with speed and navigation command.

Perception branch: pooled backbone feature through a two-layer MLP, joined
with the flattened (N, 5) detection block, then one ReLU layer to width d.
Measurement branch: one-hot command plus raw speed through one ReLU layer to
width d. The branches are summed and passed through a three-layer MLP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, add, concat, dense, flatten, init_linear, relu
from .simworld.world import COMMANDS


@dataclass(frozen=True)
class FusionConfig:
    feature_channels: int = 64
    detections: int = 16
    # width of the per-frame perception block before flattening (5 per detection slot)
    slot_width: int = 5
    residual_width: int = 32
    width: int = 64
    fused_width: int = 64

    @property
    def block_width(self) -> int:
        return self.detections * self.slot_width


def one_hot(command: str | int) -> np.ndarray:
    i = COMMANDS.index(command) if isinstance(command, str) else int(command)
    if not 0 <= i < len(COMMANDS):
        raise ValueError(f"command index {i} out of range")
    v = np.zeros(len(COMMANDS))
    v[i] = 1.0
    return v


def init_fusion(params: dict, rng, cfg: FusionConfig) -> dict:
    init_linear(params, rng, "fusion.res.0", cfg.feature_channels, cfg.residual_width)
    init_linear(params, rng, "fusion.res.1", cfg.residual_width, cfg.residual_width)
    init_linear(params, rng, "fusion.perc", cfg.block_width + cfg.residual_width, cfg.width)
    init_linear(params, rng, "fusion.meas", len(COMMANDS) + 1, cfg.width)
    init_linear(params, rng, "fusion.out.0", cfg.width, cfg.fused_width)
    init_linear(params, rng, "fusion.out.1", cfg.fused_width, cfg.fused_width)
    init_linear(params, rng, "fusion.out.2", cfg.fused_width, cfg.fused_width)
    return params


def fuse_perception(params: dict, pooled: Tensor, block: Tensor) -> Tensor:
    """``pooled`` (B, c) backbone feature; ``block`` (B, N, 5) labels and boxes."""
    res = relu(dense(params, "fusion.res.1", relu(dense(params, "fusion.res.0", pooled))))
    flat = flatten(block) if block.data.ndim == 3 else block
    return relu(dense(params, "fusion.perc", concat([flat, res], axis=-1)))


def measurement_inputs(speeds, commands) -> np.ndarray:
    speeds = np.atleast_1d(np.asarray(speeds, dtype=np.float64))
    if np.any(speeds < 0):
        raise ValueError("speed must be non-negative")
    rows = [one_hot(c) for c in np.atleast_1d(np.asarray(commands, dtype=object))]
    return np.concatenate([np.array(rows).reshape(len(speeds), -1), speeds[:, None]], axis=1)


def encode_measurements(params: dict, speeds, commands) -> Tensor:
    return relu(dense(params, "fusion.meas", Tensor(measurement_inputs(speeds, commands))))


def fuse_all(params: dict, p: Tensor, m: Tensor) -> Tensor:
    if p.shape != m.shape:
        raise ValueError(f"fusion branches differ in shape: {p.shape} vs {m.shape}")
    x = add(p, m)
    x = relu(dense(params, "fusion.out.0", x))
    x = relu(dense(params, "fusion.out.1", x))
    return dense(params, "fusion.out.2", x)
