"""Imitation samples, the on-disk dataset container, and episode collection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..control import ControlAction
from ..simworld import (Expert, Rig, ScenarioSpec, WorldState, encode_image, make_scenario, render_front_view,
                        run_episode)
from ..simworld.geometry import to_ego
from ..simworld.world import COMMANDS

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SampleRecord:
    image: np.ndarray             # (3, H, W) uint8 palette codes
    speed: float
    command: str
    goal: tuple[float, float]
    expert_waypoints: np.ndarray  # (K, 2) ego frame, goal-first
    expert_action: ControlAction
    provenance: str = "offline-0"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")


def goal_and_command(w: WorldState) -> tuple[tuple[float, float], str]:
    """Next route key point at least a few metres ahead, in the ego frame."""
    i = w.route.goal_index(w.progress)
    gx, gy = w.route.key_points[i]
    lx, ly = to_ego(gx, gy, w.ego.x, w.ego.y, w.ego.heading)
    return (float(lx), float(ly)), w.route.commands[i]


@dataclass
class Dataset:
    records: list[SampleRecord] = field(default_factory=list)
    seed: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def extend(self, recs):
        self.records.extend(recs)

    @property
    def waypoints(self) -> int:
        return len(self.records[0].expert_waypoints)

    def arrays(self) -> dict[str, np.ndarray]:
        if not self.records:
            raise ValueError("dataset is empty")
        r = self.records
        return {
            "images": np.stack([x.image for x in r]).astype(np.uint8),
            "speeds": np.array([x.speed for x in r], dtype="<f8"),
            "commands": np.array([COMMANDS.index(x.command) for x in r], dtype="<i4"),
            "goals": np.array([x.goal for x in r], dtype="<f8"),
            "waypoints": np.stack([x.expert_waypoints for x in r]).astype("<f8"),
            "actions": np.array([(x.expert_action.steer, x.expert_action.throttle) for x in r], dtype="<f8"),
        }

    def save(self, directory: str | Path) -> dict[str, str]:
        """Text manifest plus one raw little-endian array file per field."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = self.arrays()
        fields = {}
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            (directory / f"{name}.bin").write_bytes(arr.tobytes())
            fields[name] = {"dtype": arr.dtype.str, "shape": list(arr.shape), "file": f"{name}.bin"}
        manifest = {"format": FORMAT_VERSION, "count": len(self), "seed": self.seed, "fields": fields,
                    "commands": list(COMMANDS), "provenance": [x.provenance for x in self.records]}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))
        return {name: f["file"] for name, f in fields.items()}

    @classmethod
    def load(cls, directory: str | Path) -> "Dataset":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format {manifest.get('format')!r}")
        a = {}
        for name, f in manifest["fields"].items():
            raw = (directory / f["file"]).read_bytes()
            a[name] = np.frombuffer(raw, dtype=np.dtype(f["dtype"])).reshape(f["shape"])
        cmds = manifest["commands"]
        records = [SampleRecord(a["images"][i].copy(), float(a["speeds"][i]), cmds[int(a["commands"][i])],
                                (float(a["goals"][i, 0]), float(a["goals"][i, 1])), a["waypoints"][i].copy(),
                                ControlAction(float(a["actions"][i, 0]), float(a["actions"][i, 1])),
                                manifest["provenance"][i])
                   for i in range(manifest["count"])]
        return cls(records, manifest["seed"])


@dataclass
class Collection:
    records: list[SampleRecord]
    scenario: str
    outcome: str
    collided: bool
    completion: float = 0.0

    @property
    def flagged(self) -> bool:
        """Episode ended early or hit something; its records are still kept."""
        return self.collided or self.outcome != "completed"


def collect_episode(policy, spec: ScenarioSpec | WorldState, sample_rate: float = 2.0,
                    provenance: str = "offline-0", expert: Expert | None = None,
                    rig: Rig | None = None) -> Collection:
    """Drive ``policy`` and record expert-labelled samples at ``sample_rate`` Hz.

    The expert is consulted on every tick so its controller history matches the
    visited states; when the expert itself drives, its own outputs are reused.
    """
    rig = rig or Rig()
    sim_rate = 1.0 / rig.sim.dt
    ratio = sim_rate / sample_rate
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"sample rate {sample_rate} Hz does not divide the {sim_rate:g} Hz simulation rate")
    every = int(round(ratio))
    world = make_scenario(spec) if isinstance(spec, ScenarioSpec) else spec
    shadow = expert or rig.expert()
    driving_self = policy is shadow
    if not driving_self:
        shadow.reset(world)
    records: list[SampleRecord] = []

    def on_step(step):
        if driving_self:
            plan, action = step.plan, step.action
        else:
            plan, action = shadow.act(step.before)
        if step.index % every:
            return
        w = step.before
        img, _ = render_front_view(w, rig.camera)
        goal, cmd = goal_and_command(w)
        records.append(SampleRecord(encode_image(img), w.ego.speed, cmd, goal, np.array(plan), action, provenance))

    res = run_episode(world, policy, rig.sim, on_step=on_step)
    collided = any(e.kind.startswith("collision") for e in res.events)
    return Collection(records, world.scenario, res.outcome, collided, res.completion)
