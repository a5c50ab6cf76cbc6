"""World state values and the deterministic state -> state step."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..control import ControlAction
from .geometry import Polyline, to_ego

ACTOR_KINDS = ("vehicle", "pedestrian", "obstacle")
COMMANDS = ("follow-lane", "change-left", "change-right", "turn-left", "turn-right", "straight")
LANE_WIDTH = 3.5


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    wheelbase: float = 2.5
    max_steer_deg: float = 35.0
    cruise_speed: float = 6.0
    # speed-increase cap; braking is governed by brake_decel
    max_accel: float = 0.2
    throttle_accel: float = 3.0
    brake_decel: float = 5.0
    ego_radius: float = 1.4
    ego_length: float = 4.5
    ego_width: float = 1.8
    deviation_limit: float = 30.0
    blocked_speed: float = 0.1
    blocked_time: float = 90.0
    progress_band: float = 4.0
    completion_tolerance: float = 1.0


@dataclass(frozen=True)
class Ego:
    x: float
    y: float
    heading: float
    speed: float = 0.0


@dataclass(frozen=True)
class Lane:
    centerline: Polyline
    width: float = LANE_WIDTH


@dataclass(frozen=True)
class Route:
    path: Polyline
    key_s: tuple[float, ...]
    commands: tuple[str, ...]
    time_budget: float

    def __post_init__(self):
        if len(self.key_s) < 2:
            raise ValueError("a route needs at least two key points")
        if len(self.commands) != len(self.key_s):
            raise ValueError("one command per key point")
        for c in self.commands:
            if c not in COMMANDS:
                raise ValueError(f"unknown command {c!r}")

    @property
    def length(self) -> float:
        return self.path.length

    @property
    def key_points(self) -> np.ndarray:
        return self.path.points_at(np.array(self.key_s))

    def goal_index(self, progress: float, min_ahead: float = 5.0) -> int:
        for i, s in enumerate(self.key_s):
            if s >= progress + min_ahead:
                return i
        return len(self.key_s) - 1

    def command_at(self, progress: float) -> str:
        return self.commands[self.goal_index(progress)]


@dataclass(frozen=True)
class Actor:
    id: int
    kind: str
    path: Polyline
    s: float
    speed: float
    length: float
    width: float
    height: float
    cruise: float = 0.0
    accel: float = 2.0
    stops: tuple[tuple[float, float], ...] = ()
    stop_idx: int = 0
    hold_left: float = 0.0
    trigger: float | None = None
    yields: bool = False

    def __post_init__(self):
        if self.kind not in ACTOR_KINDS:
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError("actor speed must be non-negative")

    @property
    def pose(self) -> tuple[float, float, float]:
        x, y = self.path.point_at(self.s)
        return x, y, self.path.heading_at(self.s)


@dataclass(frozen=True)
class WorldState:
    time: float
    ego: Ego
    actors: tuple[Actor, ...]
    route: Route
    lanes: tuple[Lane, ...]
    progress: float = 0.0
    low_speed_time: float = 0.0
    scenario: str = ""
    meta: tuple = field(default=())

    def __post_init__(self):
        if self.ego.speed < 0:
            raise ValueError("ego speed must be non-negative")


def _approach(v: float, target: float, up: float, down: float) -> float:
    if target > v:
        return min(target, v + up)
    return max(target, v - down)


def step_actor(a: Actor, dt: float, ego: Ego, progress: float) -> Actor:
    if a.trigger is not None:
        if progress < a.trigger:
            return a
        a = replace(a, trigger=None)
    if a.hold_left > 0.0:
        left = a.hold_left - dt
        if left <= 0.0:
            return replace(a, hold_left=0.0, stop_idx=a.stop_idx + 1)
        return replace(a, hold_left=left, speed=0.0)
    target = a.cruise
    if a.stop_idx < len(a.stops):
        s_stop, hold = a.stops[a.stop_idx]
        gap = s_stop - a.s
        if gap <= 0.05:
            return replace(a, speed=0.0, hold_left=max(hold, dt))
        target = min(target, math.sqrt(2.0 * a.accel * gap))
    if a.yields:
        x, y, th = a.pose
        lx, ly = to_ego(ego.x, ego.y, x, y, th)
        if 0.0 < lx < a.length / 2 + 7.0 and abs(ly) < 2.2:
            target = 0.0
    speed = _approach(a.speed, target, a.accel * dt, 3.0 * a.accel * dt)
    s = a.s + speed * dt
    if a.stop_idx < len(a.stops):
        s = min(s, a.stops[a.stop_idx][0])
    return replace(a, s=s, speed=speed)


def step_ego(e: Ego, action: ControlAction, dt: float, cfg: SimConfig) -> Ego:
    thr = action.throttle
    acc = thr * cfg.throttle_accel if thr >= 0 else thr * cfg.brake_decel
    acc = min(acc, cfg.max_accel)
    speed = max(0.0, e.speed + acc * dt)
    # steer +1 is full right, i.e. clockwise in the world frame
    omega = -e.speed * math.tan(action.steer * math.radians(cfg.max_steer_deg)) / cfg.wheelbase
    v = e.speed
    if omega == 0.0:
        x = e.x + v * math.cos(e.heading) * dt
        y = e.y + v * math.sin(e.heading) * dt
        th = e.heading
    else:
        th = e.heading + omega * dt
        r = v / omega
        x = e.x + r * (math.sin(th) - math.sin(e.heading))
        y = e.y + r * (math.cos(e.heading) - math.cos(th))
    th = math.atan2(math.sin(th), math.cos(th))
    return Ego(x, y, th, speed)


def route_progress(w: WorldState, ego: Ego, cfg: SimConfig) -> float:
    s, _, dist = w.route.path.project((ego.x, ego.y))
    if dist > cfg.progress_band:
        return w.progress
    return max(w.progress, min(s, w.route.length))


def step_world(w: WorldState, a: ControlAction, dt: float, cfg: SimConfig | None = None) -> WorldState:
    cfg = cfg or SimConfig()
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    ego = step_ego(w.ego, a, dt, cfg)
    actors = tuple(step_actor(ac, dt, w.ego, w.progress) for ac in w.actors)
    low = w.low_speed_time + dt if ego.speed < cfg.blocked_speed else 0.0
    nxt = replace(w, time=round(w.time + dt, 9), ego=ego, actors=actors, low_speed_time=low)
    return replace(nxt, progress=route_progress(w, ego, cfg))


def completed(w: WorldState, cfg: SimConfig | None = None) -> bool:
    cfg = cfg or SimConfig()
    return w.progress >= w.route.length - cfg.completion_tolerance


def on_road(lanes, x: float, y: float) -> bool:
    p = np.array([[x, y]])
    return any(float(l.centerline.distances(p)[0]) <= l.width / 2 for l in lanes)
