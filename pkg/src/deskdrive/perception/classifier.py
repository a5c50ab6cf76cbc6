"""Classification-only baseline: same backbone shape, pooled, one softmax layer."""
from __future__ import annotations

import numpy as np

from ..numerics import Tensor, dense, init_linear, log_softmax, mul, reduce_sum, rng_for, scale, softmax
from ..types import CLASSES, Detection
from .backbone import backbone_forward, global_pool, init_backbone
from .detector import DetectorConfig


def init_classifier(cfg: DetectorConfig, seed: int) -> dict:
    rng = rng_for(seed, "classifier")
    params: dict = {}
    init_backbone(params, rng, cfg.channels)
    init_linear(params, rng, "cls.out", cfg.feature_channels, len(CLASSES))
    return params


def classifier_logits(params: dict, img) -> tuple[Tensor, Tensor, Tensor]:
    """(logits (B, classes), pooled feature (B, c), feature map)."""
    feat = backbone_forward(params, img)
    pooled = global_pool(feat)
    return dense(params, "cls.out", pooled), pooled, feat


def classifier_baseline_forward(params: dict, img) -> tuple[np.ndarray, np.ndarray]:
    """Class distribution and pooled backbone feature for each image."""
    logits, pooled, _ = classifier_logits(params, img)
    return softmax(logits, axis=-1).data, pooled.data


def scene_label(truth: list[Detection]) -> int:
    """Class of the nearest visible object (the first, nearest-first), else no-object."""
    return truth[0].class_index if truth else 0


def classifier_loss(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=int)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return scale(reduce_sum(mul(log_softmax(logits), Tensor(onehot))), -1.0 / len(labels))
