"""Rule-based privileged expert: route-following waypoints plus a corridor speed rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..control import ControlAction, Controller, ControlConfig
from .geometry import to_ego
from .render import Camera
from .world import SimConfig, WorldState, on_road


@dataclass(frozen=True)
class ExpertConfig:
    num_waypoints: int = 4
    waypoint_dt: float = 0.5
    cruise_speed: float = 6.0
    # waypoints start this far past the ego's projection so the aim point stays ahead at rest
    lead_distance: float = 2.0
    comfort_decel: float = 1.5
    lateral_accel: float = 1.2
    corridor_margin: float = 0.7
    stop_buffer: float = 3.0
    horizons: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)


def lookahead(speed: float) -> float:
    return 6.0 + 1.5 * speed + speed * speed / 4.0


def _curvature_limit(path, s0: float, s1: float, lat_accel: float, cruise: float) -> float:
    """Speed allowed by the sharpest heading change over [s0, s1]."""
    ss = np.linspace(s0, min(s1, path.length), 9)
    if ss[-1] - ss[0] < 1.0:
        return cruise
    heads = np.array([path.heading_at(s) for s in ss])
    turn = np.abs(np.angle(np.exp(1j * np.diff(heads))))
    kappa = float(np.max(turn / np.diff(ss)))
    if kappa < 1e-6:
        return cruise
    return min(cruise, math.sqrt(lat_accel / kappa))


def hazard_speed(w: WorldState, s_ego: float, cfg: ExpertConfig, sim: SimConfig) -> float:
    """Highest speed that still stops before every actor predicted in the corridor."""
    path = w.route.path
    reach = lookahead(w.ego.speed)
    half = sim.ego_width / 2 + cfg.corridor_margin
    front = sim.ego_length / 2
    limit = math.inf
    for a in w.actors:
        x, y, th = a.pose
        if (x - w.ego.x) ** 2 + (y - w.ego.y) ** 2 > (reach + 15.0) ** 2:
            continue
        vx, vy = a.speed * math.cos(th), a.speed * math.sin(th)
        for t in cfg.horizons:
            px, py = x + vx * t, y + vy * t
            s, lat, _ = path.project((px, py))
            ahead = s - s_ego
            if ahead < -1.0 or ahead > reach:
                continue
            rel = th - path.heading_at(s)
            along = abs(math.cos(rel)) * a.length / 2 + abs(math.sin(rel)) * a.width / 2
            across = abs(math.sin(rel)) * a.length / 2 + abs(math.cos(rel)) * a.width / 2
            if abs(lat) - across > half:
                continue
            gap = ahead - along - front - cfg.stop_buffer
            limit = min(limit, math.sqrt(2.0 * cfg.comfort_decel * gap) if gap > 0 else 0.0)
    return limit


def expert_plan(w: WorldState, cfg: ExpertConfig | None = None, sim: SimConfig | None = None
                ) -> tuple[np.ndarray, float]:
    """Ego-frame waypoints (index 0 farthest along the route) and the target speed."""
    cfg = cfg or ExpertConfig()
    sim = sim or SimConfig()
    path = w.route.path
    e = w.ego
    s_ego, _, _ = path.project((e.x, e.y))
    target = min(cfg.cruise_speed,
                 _curvature_limit(path, s_ego, s_ego + lookahead(e.speed), cfg.lateral_accel, cfg.cruise_speed),
                 hazard_speed(w, s_ego, cfg, sim))
    # slow into the route end so completion does not overshoot wildly
    remaining = path.length - s_ego
    target = max(0.0, min(target, math.sqrt(2.0 * cfg.comfort_decel * max(remaining, 0.0)) + 0.5))
    spacing = target * cfg.waypoint_dt
    # off the road the plan starts at the nearest centreline point to pull back onto it
    lead = cfg.lead_distance if on_road(w.lanes, e.x, e.y) else 0.0
    pts = path.points_at(s_ego + lead + spacing * np.arange(cfg.num_waypoints))
    ex, ey = to_ego(pts[:, 0], pts[:, 1], e.x, e.y, e.heading)
    plan = np.stack([ex, ey], axis=1)[::-1].copy()
    return plan, target


class Expert:
    """Stateful wrapper owning the controller; ``act`` returns (plan, action)."""

    def __init__(self, cfg: ExpertConfig | None = None, control: ControlConfig | None = None,
                 sim: SimConfig | None = None):
        self.cfg = cfg or ExpertConfig()
        self.sim = sim or SimConfig()
        self.controller = Controller(control)

    def reset(self, w: WorldState | None = None):
        self.controller.reset()

    def plan(self, w: WorldState) -> np.ndarray:
        return expert_plan(w, self.cfg, self.sim)[0]

    def act(self, w: WorldState) -> tuple[np.ndarray, ControlAction]:
        plan = self.plan(w)
        return plan, self.controller.act(plan, w.ego.speed, self.sim.dt)


@dataclass(frozen=True)
class Rig:
    """Camera, vehicle dynamics and controller gains shared by every driver in a run."""
    camera: Camera = field(default_factory=Camera)
    sim: SimConfig = field(default_factory=SimConfig)
    control: ControlConfig = field(default_factory=ControlConfig)

    def expert(self) -> "Expert":
        return Expert(control=self.control, sim=self.sim)


def expert_policy(w: WorldState, expert: Expert | None = None) -> tuple[np.ndarray, ControlAction]:
    return (expert or Expert()).act(w)
