"""The driving policy: frozen perception arm feeding fusion and the planner.

Two perception arms share the downstream networks' structure:

* ``detection``: pooled backbone feature plus the (N, 5) detection block.
* ``classifier``: pooled backbone feature plus the 5-way class distribution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fusion import FusionConfig, encode_measurements, fuse_all, fuse_perception, init_fusion
from ..numerics import Tensor, rng_for
from ..perception import (DetectorConfig, classifier_baseline_forward, detector_forward, global_pool)
from ..planner import PlannerConfig, init_planner, rollout_waypoints

ARMS = ("detection", "classifier")


@dataclass(frozen=True)
class PolicyConfig:
    arm: str = "detection"
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    residual_width: int = 32
    width: int = 64
    fused_width: int = 64
    hidden: int = 64
    waypoints: int = 4

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"unknown perception arm {self.arm!r}; expected one of {ARMS}")

    @property
    def fusion(self) -> FusionConfig:
        slots = self.detector.queries if self.arm == "detection" else 1
        return FusionConfig(self.detector.feature_channels, slots, 5, self.residual_width, self.width,
                            self.fused_width)

    @property
    def planner(self) -> PlannerConfig:
        return PlannerConfig(self.fused_width, self.hidden, self.waypoints)


def init_policy(cfg: PolicyConfig, seed: int) -> dict:
    rng = rng_for(seed, "policy", cfg.arm)
    params: dict = {}
    init_fusion(params, rng, cfg.fusion)
    init_planner(params, rng, cfg.planner)
    return params


def detection_block(class_probs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """(B, N, 5): argmax label over the class count, then the box; no-object slots get a zero box."""
    idx = np.argmax(class_probs, axis=-1)
    labels = idx / (class_probs.shape[-1] - 1)
    b = np.where((idx > 0)[..., None], boxes, 0.0)
    return np.concatenate([labels[..., None], b], axis=-1)


def perceive(cfg: PolicyConfig, perception: dict, images: np.ndarray, batch: int = 64
             ) -> tuple[np.ndarray, np.ndarray]:
    """Frozen perception features: pooled (B, c) and the flattened perception block."""
    pooled, blocks = [], []
    for s in range(0, len(images), batch):
        chunk = images[s:s + batch]
        if cfg.arm == "detection":
            out = detector_forward(perception, chunk, cfg.detector)
            pooled.append(global_pool(out.features).data)
            blocks.append(detection_block(out.class_probs, out.boxes.data).reshape(len(chunk), -1))
        else:
            probs, pool = classifier_baseline_forward(perception, chunk)
            pooled.append(pool)
            blocks.append(probs)
    return np.concatenate(pooled), np.concatenate(blocks)


def policy_forward(params: dict, cfg: PolicyConfig, pooled, block, speeds, commands, goals) -> Tensor:
    """(B, K, 2) ego-frame waypoints from cached perception features and measurements."""
    pooled = pooled if isinstance(pooled, Tensor) else Tensor(pooled)
    block = block if isinstance(block, Tensor) else Tensor(block)
    p = fuse_perception(params, pooled, block)
    m = encode_measurements(params, speeds, commands)
    fused = fuse_all(params, p, m)
    return rollout_waypoints(params, fused, goals, cfg.planner)
