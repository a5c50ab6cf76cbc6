"""Closed-loop episode runner and the line-delimited trace format."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Protocol

import numpy as np

from ..control import ControlAction
from .infractions import TERMINAL_KINDS, InfractionEvent, detect_infractions
from .world import SimConfig, WorldState, completed, step_world


class Agent(Protocol):
    def reset(self, w: WorldState) -> None: ...

    def act(self, w: WorldState) -> tuple[np.ndarray, ControlAction]: ...


@dataclass(frozen=True)
class TraceRecord:
    time: float
    x: float
    y: float
    heading: float
    speed: float
    steer: float
    throttle: float
    progress: float
    events: tuple[str, ...] = ()

    def to_json(self) -> str:
        d = asdict(self)
        d["events"] = list(self.events)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        d = json.loads(line)
        d["events"] = tuple(d["events"])
        return cls(**d)


@dataclass
class EpisodeResult:
    scenario: str
    route_length: float
    trace: list[TraceRecord] = field(default_factory=list)
    events: list[InfractionEvent] = field(default_factory=list)
    outcome: str = "running"
    final: WorldState | None = None

    @property
    def duration(self) -> float:
        return self.trace[-1].time if self.trace else 0.0

    @property
    def completion(self) -> float:
        """Route completion in percent."""
        if self.final is None or self.route_length <= 0:
            return 0.0
        if self.outcome == "completed":
            return 100.0
        return min(100.0, 100.0 * self.final.progress / self.route_length)

    @property
    def distance_km(self) -> float:
        pts = np.array([[r.x, r.y] for r in self.trace])
        if len(pts) < 2:
            return 0.0
        return float(np.hypot(*np.diff(pts, axis=0).T).sum() / 1000.0)

    @property
    def path(self) -> np.ndarray:
        return np.array([[r.x, r.y] for r in self.trace]).reshape(-1, 2)


@dataclass(frozen=True)
class Step:
    """One control tick: state seen by the agent, its outputs, and what followed."""
    before: WorldState
    plan: np.ndarray
    action: ControlAction
    after: WorldState
    events: tuple[InfractionEvent, ...]
    index: int


def simulate(w: WorldState, agent: Agent, cfg: SimConfig | None = None) -> Iterator[Step]:
    """Drive ``agent`` until completion or a terminal infraction."""
    cfg = cfg or SimConfig()
    agent.reset(w)
    i = 0
    while True:
        plan, action = agent.act(w)
        nxt = step_world(w, action, cfg.dt, cfg)
        events = tuple(detect_infractions(w, nxt, cfg))
        yield Step(w, plan, action, nxt, events, i)
        w = nxt
        i += 1
        if completed(w, cfg) or any(e.kind in TERMINAL_KINDS for e in events):
            return


def run_episode(w: WorldState, agent: Agent, cfg: SimConfig | None = None,
                on_step: Callable[[Step], None] | None = None) -> EpisodeResult:
    cfg = cfg or SimConfig()
    res = EpisodeResult(w.scenario, w.route.length, final=w)
    e = w.ego
    res.trace.append(TraceRecord(w.time, e.x, e.y, e.heading, e.speed, 0.0, 0.0, w.progress))
    for st in simulate(w, agent, cfg):
        if on_step is not None:
            on_step(st)
        e, a = st.after.ego, st.action
        res.trace.append(TraceRecord(st.after.time, e.x, e.y, e.heading, e.speed, a.steer, a.throttle,
                                     st.after.progress, tuple(ev.kind for ev in st.events)))
        res.events.extend(st.events)
        res.final = st.after
    terminal = [ev.kind for ev in res.events if ev.kind in TERMINAL_KINDS]
    res.outcome = terminal[0] if terminal else "completed"
    return res


def write_trace(path: str | Path, res: EpisodeResult) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"scenario": res.scenario, "route_length": res.route_length,
                             "outcome": res.outcome}) + "\n")
        for r in res.trace:
            fh.write(r.to_json() + "\n")


def read_trace(path: str | Path) -> tuple[dict, list[TraceRecord]]:
    with open(path) as fh:
        head = json.loads(fh.readline())
        return head, [TraceRecord.from_json(line) for line in fh if line.strip()]
