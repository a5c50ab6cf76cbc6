"""Waypoint loss, offline behaviour cloning, and dataset-aggregation rounds."""
from __future__ import annotations

import hashlib
import math
import logging
from dataclasses import dataclass, field

import numpy as np

from ..numerics import AdamState, Tensor, Tape, absolute, adam_step, backward, reduce_sum, rng_for, scale, sub
from ..simworld import Rig, ScenarioSpec
from ..simworld.world import COMMANDS
from .agent import StudentAgent
from .data import Dataset, collect_episode
from .model import PolicyConfig, perceive, policy_forward

log = logging.getLogger(__name__)


def waypoint_loss(pred, truth) -> Tensor:
    """Sum of per-coordinate absolute errors per plan, averaged over a batch."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    truth_arr = truth.data if isinstance(truth, Tensor) else np.asarray(truth, dtype=np.float64)
    if pred.shape != truth_arr.shape:
        raise ValueError(f"waypoint plans differ in shape: {pred.shape} vs {truth_arr.shape}")
    batch = pred.shape[0] if pred.data.ndim == 3 else 1
    return scale(reduce_sum(absolute(sub(pred, Tensor(truth_arr)))), 1.0 / batch)


class FeatureCache:
    """Frozen-perception features keyed by image content."""

    def __init__(self, cfg: PolicyConfig, perception: dict):
        self.cfg, self.perception = cfg, perception
        self._store: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    def features(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keys = [hashlib.sha1(im.tobytes()).digest() for im in images]
        missing = [i for i, k in enumerate(keys) if k not in self._store]
        if missing:
            pooled, block = perceive(self.cfg, self.perception, images[missing].astype(np.float64) / 255.0)
            for j, i in enumerate(missing):
                self._store[keys[i]] = (pooled[j], block[j])
        return (np.stack([self._store[k][0] for k in keys]), np.stack([self._store[k][1] for k in keys]))


SCHEDULES = ("constant", "cosine")


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 32
    schedule: str = "constant"

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown learning-rate schedule {self.schedule!r}; expected one of {SCHEDULES}")

    def lr_at(self, epoch: int) -> float:
        """Per-epoch rate; ``cosine`` decays from ``lr`` toward zero over the run."""
        if self.schedule == "constant":
            return self.lr
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


@dataclass
class Batchable:
    pooled: np.ndarray
    block: np.ndarray
    speeds: np.ndarray
    commands: list
    goals: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.speeds)

    def take(self, idx):
        return Batchable(self.pooled[idx], self.block[idx], self.speeds[idx],
                         [self.commands[i] for i in idx], self.goals[idx], self.targets[idx])


def prepare(ds: Dataset, cache: FeatureCache) -> Batchable:
    a = ds.arrays()
    pooled, block = cache.features(a["images"])
    return Batchable(pooled, block, a["speeds"], [COMMANDS[i] for i in a["commands"]], a["goals"], a["waypoints"])


def batch_loss(params: dict, cfg: PolicyConfig, b: Batchable) -> Tensor:
    pred = policy_forward(params, cfg, b.pooled, b.block, b.speeds, b.commands, b.goals)
    return waypoint_loss(pred, b.targets)


def evaluate(params: dict, cfg: PolicyConfig, data: Batchable, batch: int = 256) -> float:
    """Mean per-sample waypoint loss over a whole set."""
    total = 0.0
    for s in range(0, len(data), batch):
        part = data.take(np.arange(s, min(s + batch, len(data))))
        total += batch_loss(params, cfg, part).item() * len(part)
    return total / len(data)


def train_offline(params: dict, cfg: PolicyConfig, ds: Dataset, cache: FeatureCache, train: TrainConfig,
                  seed: int = 0, tag: str = "offline") -> tuple[dict, list[float]]:
    """Adam on the waypoint loss over fusion + planner parameters only.

    Returns the new parameters and the mean training loss of each epoch.
    """
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    data = prepare(ds, cache)
    rng = rng_for(seed, "epochs", tag)
    state = AdamState.zeros_like(params)
    curve = []
    for epoch in range(train.epochs):
        order = rng.permutation(len(data))
        lr = train.lr_at(epoch)
        total = 0.0
        for s in range(0, len(order), train.batch):
            part = data.take(order[s:s + train.batch])
            with Tape() as tape:
                loss = batch_loss(params, cfg, part)
            grads = backward(tape, loss).for_params(params)
            params, state = adam_step(params, grads, state, lr)
            total += loss.item() * len(part)
        curve.append(total / len(data))
        if epoch % 10 == 0 or epoch == train.epochs - 1:
            log.info("%s epoch %d loss %.4f", tag, epoch, curve[-1])
    return params, curve


def mix_half_and_half(old: Dataset, new: Dataset, seed: int, round_id: int) -> Dataset:
    """Equal record counts from both sides; the larger side is subsampled uniformly."""
    n = min(len(old), len(new))
    rng = rng_for(seed, "mix", round_id)

    def pick(ds):
        if len(ds) == n:
            return list(ds.records)
        idx = np.sort(rng.choice(len(ds), size=n, replace=False))
        return [ds.records[i] for i in idx]

    return Dataset(pick(old) + pick(new), seed)


def student_collect(params: dict, cfg: PolicyConfig, perception: dict, specs: list[ScenarioSpec],
                    provenance: str, sample_rate: float = 2.0, rig: Rig | None = None
                    ) -> tuple[Dataset, list]:
    ds, runs = Dataset(), []
    for spec in specs:
        agent = StudentAgent(cfg, params, perception, rig)
        col = collect_episode(agent, spec, sample_rate, provenance, rig=rig)
        ds.extend(col.records)
        runs.append(col)
    return ds, runs


def expert_collect(specs: list[ScenarioSpec], provenance: str = "offline-0", sample_rate: float = 2.0,
                   rig: Rig | None = None) -> Dataset:
    ds = Dataset()
    for spec in specs:
        expert = (rig or Rig()).expert()
        ds.extend(collect_episode(expert, spec, sample_rate, provenance, expert=expert, rig=rig).records)
    return ds


@dataclass
class RoundReport:
    round_id: int
    new_records: int
    mixed_records: int
    completion: float
    curve: list[float] = field(default_factory=list)


def dagger_round(params: dict, cfg: PolicyConfig, perception: dict, specs: list[ScenarioSpec], old: Dataset,
                 cache: FeatureCache, train: TrainConfig, round_id: int, seed: int = 0,
                 rig: Rig | None = None) -> tuple[Dataset, dict, RoundReport]:
    """Student drives, expert labels, mix half and half, retrain from the current weights."""
    new, runs = student_collect(params, cfg, perception, specs, f"dagger-{round_id}", rig=rig)
    if len(new) == 0:
        raise RuntimeError(f"round {round_id}: the student produced no samples")
    mixed = mix_half_and_half(old, new, seed, round_id)
    params, curve = train_offline(params, cfg, mixed, cache, train, seed, tag=f"dagger-{round_id}")
    completion = float(np.mean([c.completion for c in runs]))
    return mixed, params, RoundReport(round_id, len(new), len(mixed), completion, curve)
