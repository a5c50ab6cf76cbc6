"""Seeded constructors for the six scenario kinds.

All roads run eastward from the ego start at the origin. Right-hand traffic:
the opposite-direction lane, when present, sits one lane width to the left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import rng_for
from .geometry import Polyline, build_path
from .world import LANE_WIDTH, Actor, Ego, Lane, Route, WorldState

SCENARIO_KINDS = ("follow", "lead-vehicle-stop", "pedestrian-crossing",
                  "intersection-turn", "lane-change", "dense-traffic")

VEHICLE = dict(length=4.5, width=1.8, height=1.5)
PEDESTRIAN = dict(length=0.6, width=0.6, height=1.8)
OBSTACLE = dict(length=1.6, width=1.6, height=1.0)
KEY_SPACING = 15.0
PARKED = 1e9


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    seed: int = 0
    density: float = 1.0

    @property
    def name(self) -> str:
        return f"{self.kind}-{self.seed}"


class _Builder:
    def __init__(self):
        self.actors: list[Actor] = []

    def vehicle(self, path, s, cruise, stops=(), yields=True, speed=None):
        self._add("vehicle", path, s, cruise, stops, VEHICLE, speed=cruise if speed is None else speed,
                  yields=yields, accel=2.0)

    def pedestrian(self, path, s, cruise, trigger=None, stops=()):
        self._add("pedestrian", path, s, cruise, stops, PEDESTRIAN, speed=0.0 if trigger else cruise,
                  trigger=trigger, accel=4.0)

    def obstacle(self, path, s):
        self._add("obstacle", path, s, 0.0, (), OBSTACLE, speed=0.0)

    def _add(self, kind, path, s, cruise, stops, dims, **kw):
        self.actors.append(Actor(id=len(self.actors), kind=kind, path=path, s=float(s),
                                 cruise=float(cruise), stops=tuple(stops), **dims, **kw))


def _keys(length: float, marks: dict[float, str] | None = None) -> tuple[tuple[float, ...], tuple[str, ...]]:
    """Key points every KEY_SPACING metres plus ``marks`` (arc -> command)."""
    marks = dict(marks or {})
    s_vals = set(np.arange(KEY_SPACING, length, KEY_SPACING).round(6)) | {0.0, round(length, 6)}
    for m in marks:
        # drop regular keys crowding an explicit mark
        s_vals = {s for s in s_vals if abs(s - m) > 4.0 or s in (0.0, round(length, 6))}
        s_vals.add(round(m, 6))
    ordered = sorted(s_vals)
    return tuple(ordered), tuple(marks.get(s, "follow-lane") for s in ordered)


def _route(path: Polyline, marks=None) -> Route:
    key_s, cmds = _keys(path.length, marks)
    return Route(path, key_s, cmds, time_budget=60.0 + 1.2 * path.length)


def _world(spec, route, lanes, b: _Builder, meta=()) -> WorldState:
    x, y = route.path.point_at(0.0)
    ego = Ego(x, y, route.path.heading_at(0.0), 0.0)
    return WorldState(0.0, ego, tuple(b.actors), route, tuple(lanes), scenario=spec.name, meta=meta)


def _straight(y: float, x0: float = -40.0, x1: float = 260.0) -> Polyline:
    return Polyline([(x0, y), (x1, y)])


def _crossing_path(x: float, y0: float, y1: float) -> Polyline:
    return Polyline([(x, y0), (x, y1)])


def _follow(spec, rng):
    kappa = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.0, 1.0 / 45.0))
    base = build_path((-40.0, 0.0), 0.0, [("straight", 40.0 + rng.uniform(20, 30)),
                                          ("arc", 35.0, kappa), ("straight", 160.0)], step=2.0)
    length = float(rng.uniform(90, 110))
    route = _route(base.slice(40.0, 40.0 + length))
    opposite = base.offset(LANE_WIDTH).reversed()
    b = _Builder()
    b.vehicle(base, 40.0 + rng.uniform(18, 28), rng.uniform(3.0, 4.5))
    for _ in range(int(rng.integers(1, 3))):
        b.vehicle(opposite, rng.uniform(0, 200), rng.uniform(4, 6))
    return _world(spec, route, [Lane(base), Lane(opposite)], b, (("curvature", kappa),))


def _lead_vehicle_stop(spec, rng):
    lane = _straight(0.0)
    opposite = _straight(LANE_WIDTH).reversed()
    length = float(rng.uniform(90, 110))
    route = _route(lane.slice(40.0, 40.0 + length))
    b = _Builder()
    s0 = 40.0 + rng.uniform(15, 22)
    cruise = rng.uniform(1.5, 2.5)
    stop = 40.0 + rng.uniform(40, 55)
    b.vehicle(lane, s0, cruise, stops=[(stop, rng.uniform(8, 14))])
    b.vehicle(opposite, rng.uniform(0, 200), rng.uniform(4, 6))
    return _world(spec, route, [Lane(lane), Lane(opposite)], b)


def _pedestrian_crossing(spec, rng):
    lane = _straight(0.0)
    opposite = _straight(LANE_WIDTH).reversed()
    length = float(rng.uniform(95, 110))
    route = _route(lane.slice(40.0, 40.0 + length))
    b = _Builder()
    s_p = float(rng.uniform(45, 60))
    walk = _crossing_path(s_p, -4.0, LANE_WIDTH + 5.0)
    b.pedestrian(walk, 0.0, rng.uniform(1.2, 1.6), trigger=s_p - rng.uniform(14, 22),
                 stops=[(walk.length - 0.01, PARKED)])
    strolling = _straight(LANE_WIDTH + 3.8, -40.0, 300.0)
    b.pedestrian(strolling, 40.0 + rng.uniform(10, 60), rng.uniform(0.8, 1.4))
    b.vehicle(opposite, rng.uniform(0, 200), rng.uniform(4, 6))
    return _world(spec, route, [Lane(lane), Lane(opposite)], b, (("crossing_at", s_p),))


def _intersection_turn(spec, rng):
    turn = ("left", "right", "straight")[spec.seed % 3]
    xc = float(rng.uniform(40, 48))
    east = Polyline([(-40.0, 0.0), (xc + 120.0, 0.0)])
    west = Polyline([(xc + 120.0, LANE_WIDTH), (-40.0, LANE_WIDTH)])
    north = _crossing_path(xc + LANE_WIDTH / 2, -200.0, 120.0)
    south = _crossing_path(xc - LANE_WIDTH / 2, 200.0, -120.0)
    lanes = [Lane(east), Lane(west), Lane(north), Lane(south)]
    if turn == "left":
        r = 8.0
        path = build_path((0.0, 0.0), 0.0, [("straight", xc + LANE_WIDTH / 2 - r),
                                            ("arc", r * math.pi / 2, 1.0 / r), ("straight", 45.0)],
                          step=0.5)
        cmd = "turn-left"
        arc_end = xc + LANE_WIDTH / 2 - r + r * math.pi / 2
    elif turn == "right":
        r = 5.5
        path = build_path((0.0, 0.0), 0.0, [("straight", xc - LANE_WIDTH / 2 - r),
                                            ("arc", r * math.pi / 2, -1.0 / r), ("straight", 45.0)],
                          step=0.5)
        cmd = "turn-right"
        arc_end = xc - LANE_WIDTH / 2 - r + r * math.pi / 2
    else:
        path = build_path((0.0, 0.0), 0.0, [("straight", xc + 50.0)])
        cmd = "straight"
        arc_end = xc + 5.0
    if turn != "straight":
        lanes.append(Lane(path))
    route = _route(path, {arc_end: cmd})
    b = _Builder()
    # time the ego would reach the junction under the acceleration cap
    t_junction = math.sqrt(2.0 * max(xc - 6.0, 1.0) / 0.2)
    for lane_path, cross_at in ((north, 200.0), (south, 200.0 - LANE_WIDTH)):
        v = rng.uniform(4.0, 6.0)
        s0 = cross_at - v * (t_junction + rng.uniform(-8.0, 8.0))
        b.vehicle(lane_path, max(s0, 1.0), v)
    v = rng.uniform(4.0, 6.0)
    b.vehicle(west, max(120.0 - v * (t_junction + rng.uniform(-8.0, 8.0)), 1.0), v)
    return _world(spec, route, lanes, b, (("turn", turn), ("junction_x", xc)))


def _lane_change(spec, rng):
    left = spec.seed % 2 == 0
    y0, y1 = (0.0, LANE_WIDTH) if left else (LANE_WIDTH, 0.0)
    s_lc = float(rng.uniform(25, 35))
    span = 20.0
    xs = np.arange(0.0, s_lc + span + 50.0 + 1e-9, 1.0)
    u = np.clip((xs - s_lc) / span, 0.0, 1.0)
    ys = y0 + (y1 - y0) * (1 - np.cos(np.pi * u)) / 2
    path = Polyline(np.stack([xs, ys], 1))
    lane_a, lane_b = _straight(y0), _straight(y1)
    route = _route(path, {s_lc + span: "change-left" if left else "change-right"})
    b = _Builder()
    b.obstacle(lane_a, 40.0 + s_lc + span + rng.uniform(10, 18))
    b.vehicle(lane_b, 40.0 + rng.uniform(40, 55), rng.uniform(4.0, 5.0))
    b.vehicle(lane_a, 40.0 + rng.uniform(12, 18), rng.uniform(1.0, 2.0),
              stops=[(40.0 + s_lc + span + 4.0, PARKED)])
    return _world(spec, route, [Lane(lane_a), Lane(lane_b)], b, (("direction", "left" if left else "right"),))


def _dense_traffic(spec, rng):
    lane = _straight(0.0)
    adjacent = _straight(LANE_WIDTH)
    length = float(rng.uniform(95, 110))
    route = _route(lane.slice(40.0, 40.0 + length))
    b = _Builder()
    d = max(spec.density, 0.0)
    b.vehicle(lane, 40.0 + rng.uniform(12, 18), rng.uniform(2.0, 3.0),
              stops=[(40.0 + rng.uniform(35, 45), rng.uniform(3, 6)),
                     (40.0 + rng.uniform(70, 80), rng.uniform(3, 6))])
    b.vehicle(lane, 40.0 + rng.uniform(38, 48), rng.uniform(3.5, 4.5))
    v_adj = rng.uniform(4.0, 6.0)
    n_adj = max(1, int(round(3 * d)))
    for i in range(n_adj):
        b.vehicle(adjacent, 40.0 - 12.0 + i * 22.0 + rng.uniform(-3, 3), v_adj)
    side_r = _straight(-3.8, -40.0, 300.0)
    side_l = _straight(LANE_WIDTH + 3.8, 300.0, -40.0)
    b.pedestrian(side_r, 40.0 + rng.uniform(5, 25), rng.uniform(0.8, 1.4))
    b.pedestrian(side_r, 40.0 + rng.uniform(30, 45), rng.uniform(0.8, 1.4))
    b.pedestrian(side_l, 300.0 - rng.uniform(10, 40), rng.uniform(0.8, 1.4))
    if rng.random() < 0.5 * min(d, 2.0):
        s_p = float(rng.uniform(55, 75))
        walk = _crossing_path(s_p, -4.0, 2 * LANE_WIDTH + 4.0)
        b.pedestrian(walk, 0.0, rng.uniform(1.2, 1.6), trigger=s_p - rng.uniform(14, 22),
                     stops=[(walk.length - 0.01, PARKED)])
    return _world(spec, route, [Lane(lane), Lane(adjacent)], b)


_MAKERS = {
    "follow": _follow,
    "lead-vehicle-stop": _lead_vehicle_stop,
    "pedestrian-crossing": _pedestrian_crossing,
    "intersection-turn": _intersection_turn,
    "lane-change": _lane_change,
    "dense-traffic": _dense_traffic,
}


def make_scenario(spec: ScenarioSpec) -> WorldState:
    if spec.kind not in _MAKERS:
        raise ValueError(f"unknown scenario kind {spec.kind!r}; expected one of {SCENARIO_KINDS}")
    return _MAKERS[spec.kind](spec, rng_for(spec.seed, "scenario", spec.kind))


def suite(kinds, seeds) -> list[ScenarioSpec]:
    return [ScenarioSpec(k, int(s)) for k in kinds for s in seeds]
