"""Set-prediction detector: backbone, transformer, and the class/box heads."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import (Tensor, absolute, dense, index, init_linear, log_softmax, mul, reduce_sum, relu, rng_for,
                        scale, sigmoid, softmax, sub)
from ..types import CLASSES, Detection, label_of
from .backbone import backbone_forward, init_backbone
from .matching import hungarian_match
from .transformer import TransformerConfig, init_transformer, transformer_decode, transformer_encode

NO_OBJECT_WEIGHT = 0.1


@dataclass(frozen=True)
class DetectorConfig:
    channels: tuple[int, ...] = (16, 32, 64, 64, 64)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)

    @property
    def feature_channels(self) -> int:
        return self.channels[-1]

    @property
    def queries(self) -> int:
        return self.transformer.queries


@dataclass
class DetectorOutput:
    features: Tensor      # (B, c, H, W)
    logits: Tensor        # (B, N, classes)
    boxes: Tensor         # (B, N, 4)
    attention: list = field(default_factory=list)

    @property
    def class_probs(self) -> np.ndarray:
        return softmax(Tensor(self.logits.data), axis=-1).data

    def detection_sets(self) -> list["DetectionSet"]:
        return [DetectionSet.from_arrays(p, b) for p, b in zip(self.class_probs, self.boxes.data)]


@dataclass(frozen=True)
class DetectionSet:
    """Exactly N (label, box) pairs; unused slots carry the no-object label."""
    detections: tuple[Detection, ...]

    @classmethod
    def from_arrays(cls, class_probs: np.ndarray, boxes: np.ndarray) -> "DetectionSet":
        idx = np.argmax(class_probs, axis=-1)
        return cls(tuple(Detection(label_of(int(i)), tuple(float(v) for v in b)) for i, b in zip(idx, boxes)))

    def __len__(self):
        return len(self.detections)

    def as_array(self) -> np.ndarray:
        """(N, 5) rows of label followed by the box."""
        return np.array([(d.label,) + tuple(d.box) for d in self.detections]).reshape(-1, 5)

    def objects(self) -> list[Detection]:
        return [d for d in self.detections if d.class_index != 0]


def _init_mlp(params, rng, name, widths):
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        init_linear(params, rng, f"{name}.{i}", a, b)


def _mlp(params, name, x, layers):
    for i in range(layers):
        x = dense(params, f"{name}.{i}", x)
        if i < layers - 1:
            x = relu(x)
    return x


def init_detector(cfg: DetectorConfig, seed: int) -> dict:
    rng = rng_for(seed, "detector")
    params: dict = {}
    init_backbone(params, rng, cfg.channels)
    init_transformer(params, rng, cfg.transformer, cfg.feature_channels)
    d = cfg.transformer.d_model
    _init_mlp(params, rng, "head.cls", (d, d, d, len(CLASSES)))
    _init_mlp(params, rng, "head.box", (d, d, d, 4))
    return params


def ffn_heads(params: dict, latent: Tensor) -> tuple[Tensor, Tensor]:
    """Two separate three-layer MLPs: class logits and sigmoid boxes."""
    return _mlp(params, "head.cls", latent, 3), sigmoid(_mlp(params, "head.box", latent, 3))


def detector_forward(params: dict, img, cfg: DetectorConfig, use_pos: bool = True, log_attention=False
                     ) -> DetectorOutput:
    feat = backbone_forward(params, img)
    log = [] if log_attention else None
    memory, pos = transformer_encode(params, feat, cfg.transformer, use_pos=use_pos, log=log)
    latent = transformer_decode(params, memory, cfg.transformer, pos=pos, log=log)
    logits, boxes = ffn_heads(params, latent)
    return DetectorOutput(feat, logits, boxes, log or [])


def match_batch(out: DetectorOutput, truths: list[list[Detection]]) -> list[list[tuple[int, int]]]:
    probs, boxes = out.class_probs, out.boxes.data
    return [hungarian_match(probs[i], boxes[i], t) for i, t in enumerate(truths)]


def detection_pretrain_loss(out: DetectorOutput, truths: list[list[Detection]],
                            assignment: list[list[tuple[int, int]]]) -> tuple[Tensor, dict]:
    """Weighted cross-entropy over all slots plus L1 on matched boxes.

    Cross-entropy is normalised by the total slot weight; the box term sums the
    four coordinate errors per matched box and averages over matched boxes.
    """
    b, n, k = out.logits.shape
    target = np.zeros((b, n, k))
    target[:, :, 0] = NO_OBJECT_WEIGHT
    bi, ni, tb = [], [], []
    for i, (pairs, truth) in enumerate(zip(assignment, truths)):
        for p, t in pairs:
            target[i, p, 0] = 0.0
            target[i, p, truth[t].class_index] = 1.0
            bi.append(i)
            ni.append(p)
            tb.append(truth[t].box)
    ce = scale(reduce_sum(mul(log_softmax(out.logits), Tensor(target))), -1.0 / target.sum())
    if bi:
        picked = index(out.boxes, (np.array(bi), np.array(ni)))
        l1 = scale(reduce_sum(absolute(sub(picked, Tensor(np.array(tb))))), 1.0 / len(bi))
        total = ce + l1
    else:
        l1 = None
        total = ce
    return total, {"ce": ce.item(), "l1": 0.0 if l1 is None else l1.item()}


def matched_box_l1(params: dict, cfg: DetectorConfig, images: np.ndarray, truths, batch: int = 32
                   ) -> dict[str, float]:
    """Held-out localisation error of matched boxes, per box and per coordinate."""
    errs = []
    for s in range(0, len(images), batch):
        out = detector_forward(params, images[s:s + batch], cfg)
        chunk = truths[s:s + batch]
        for i, pairs in enumerate(match_batch(out, chunk)):
            for p, t in pairs:
                errs.append(np.abs(out.boxes.data[i, p] - np.array(chunk[i][t].box)))
    e = np.array(errs).reshape(-1, 4)
    if len(e) == 0:
        return {"per_box": 0.0, "per_coordinate": 0.0, "boxes": 0}
    return {"per_box": float(e.sum(axis=1).mean()), "per_coordinate": float(e.mean()), "boxes": len(e)}
