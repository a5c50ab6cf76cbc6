"""Rendered-frame datasets and the supervised pretraining loops for both perception arms."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..numerics import AdamState, Tape, adam_step, backward, rng_for
from ..simworld import Rig, ScenarioSpec, encode_image, make_scenario, render_front_view, run_episode
from ..types import Detection
from .classifier import classifier_logits, classifier_loss, scene_label
from .detector import DetectorConfig, detection_pretrain_loss, detector_forward, match_batch

log = logging.getLogger(__name__)


@dataclass
class FrameSet:
    codes: np.ndarray                 # (M, 3, H, W) uint8 palette codes
    truths: list[list[Detection]]

    def __len__(self):
        return len(self.codes)

    def images(self, idx=None) -> np.ndarray:
        c = self.codes if idx is None else self.codes[idx]
        return c.astype(np.float64) / 255.0


def render_frames(specs: list[ScenarioSpec], every: float = 1.0, rig: Rig | None = None) -> FrameSet:
    """Frames from expert-driven episodes, one every ``every`` seconds of sim time."""
    rig = rig or Rig()
    codes, truths = [], []
    stride = max(1, int(round(every / rig.sim.dt)))
    for spec in specs:
        world = make_scenario(spec)

        def grab(step):
            if step.index % stride == 0:
                img, dets = render_front_view(step.before, rig.camera)
                codes.append(encode_image(img))
                truths.append(dets)

        run_episode(world, rig.expert(), rig.sim, on_step=grab)
    return FrameSet(np.array(codes), truths)


def _batches(n: int, batch: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n)
        for s in range(0, n - batch + 1 if n >= batch else 1, batch):
            yield order[s:s + batch]


def pretrain_detector(params: dict, cfg: DetectorConfig, frames: FrameSet, steps: int, lr: float = 1e-3,
                      batch: int = 32, seed: int = 0) -> tuple[dict, list[float]]:
    rng = rng_for(seed, "detector-batches")
    state = AdamState.zeros_like(params)
    losses = []
    for step, idx in zip(range(steps), _batches(len(frames), batch, rng)):
        truths = [frames.truths[i] for i in idx]
        with Tape() as tape:
            out = detector_forward(params, frames.images(idx), cfg)
            loss, parts = detection_pretrain_loss(out, truths, match_batch(out, truths))
        grads = backward(tape, loss).for_params(params)
        params, state = adam_step(params, grads, state, lr)
        losses.append(loss.item())
        if step % 100 == 0:
            log.info("detector step %d loss %.4f (ce %.4f, l1 %.4f)", step, loss.item(), parts["ce"], parts["l1"])
    return params, losses


def pretrain_classifier(params: dict, frames: FrameSet, steps: int, lr: float = 1e-3, batch: int = 32,
                        seed: int = 0) -> tuple[dict, list[float]]:
    rng = rng_for(seed, "classifier-batches")
    labels = np.array([scene_label(t) for t in frames.truths])
    state = AdamState.zeros_like(params)
    losses = []
    for step, idx in zip(range(steps), _batches(len(frames), batch, rng)):
        with Tape() as tape:
            logits, _, _ = classifier_logits(params, frames.images(idx))
            loss = classifier_loss(logits, labels[idx])
        grads = backward(tape, loss).for_params(params)
        params, state = adam_step(params, grads, state, lr)
        losses.append(loss.item())
        if step % 100 == 0:
            log.info("classifier step %d loss %.4f", step, loss.item())
    return params, losses
