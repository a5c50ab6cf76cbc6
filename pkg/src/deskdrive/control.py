"""Waypoint-to-actuator mapping: aim point, desired speed, heading, two PIDs.

Ego frame throughout: x forward, y left (metres). Steering follows the
actuator convention where -1 is full left, so a target on the left produces
a negative steer.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ControlAction:
    steer: float = 0.0
    throttle: float = 0.0

    def __post_init__(self):
        if not (-1.0 <= self.steer <= 1.0 and -1.0 <= self.throttle <= 1.0):
            raise ValueError(f"action out of range: {self}")


@dataclass(frozen=True)
class ControlConfig:
    lateral_kp: float = 1.25
    lateral_ki: float = 0.75
    lateral_kd: float = 0.3
    lateral_window: int = 30
    longitudinal_kp: float = 5.0
    longitudinal_ki: float = 0.5
    longitudinal_kd: float = 1.0
    longitudinal_window: int = 40
    max_throttle: float = 0.75
    brake_speed: float = 0.4
    waypoint_dt: float = 0.5


class PidController:
    def __init__(self, kp: float, ki: float, kd: float, n: int):
        if n < 1:
            raise ValueError("PID window must hold at least one sample")
        self.kp, self.ki, self.kd, self.n = kp, ki, kd, n
        self.buffer: deque[float] = deque(maxlen=n)
        self.last_error = 0.0
        self.terms = (0.0, 0.0, 0.0)

    def step(self, error: float, dt: float = 0.05) -> float:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.buffer.append(error)
        integral = sum(self.buffer) / len(self.buffer)
        derivative = error - self.last_error
        self.last_error = error
        self.terms = (self.kp * error, self.ki * integral, self.kd * derivative)
        return self.terms[0] + self.terms[1] + self.terms[2]

    def reset(self):
        self.buffer.clear()
        self.last_error = 0.0


def pid_step(c: PidController, error: float, dt: float = 0.05) -> float:
    return c.step(error, dt)


def _as_points(plan) -> np.ndarray:
    pts = np.asarray(plan, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"a plan is a (K, 2) array of ego-frame points, got shape {pts.shape}")
    return pts


def aim_point(plan) -> np.ndarray:
    pts = _as_points(plan)
    if len(pts) == 0:
        raise ValueError("empty plan")
    return pts.sum(axis=0) / len(pts)


def desired_speed(plan, dt: float) -> float:
    """Mean segment length between consecutive waypoints over ``dt``."""
    if dt <= 0:
        raise ValueError(f"waypoint interval must be positive, got {dt}")
    pts = _as_points(plan)
    if len(pts) < 2:
        raise ValueError("desired speed needs at least two waypoints")
    seg = np.hypot(*(pts[1:] - pts[:-1]).T)
    return float(seg.sum() / len(seg) / dt)


def heading_angle(p) -> tuple[float, bool]:
    """Angle from the ego heading to ``p``; second item flags a degenerate aim."""
    px, py = float(p[0]), float(p[1])
    if px == 0.0 and py == 0.0:
        return 0.0, True
    return math.atan2(py, px), False


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


class Controller:
    """Lateral + longitudinal PID pair owned by a single vehicle."""

    def __init__(self, cfg: ControlConfig | None = None):
        self.cfg = cfg = cfg or ControlConfig()
        self.lateral = PidController(cfg.lateral_kp, cfg.lateral_ki, cfg.lateral_kd, cfg.lateral_window)
        self.longitudinal = PidController(cfg.longitudinal_kp, cfg.longitudinal_ki,
                                          cfg.longitudinal_kd, cfg.longitudinal_window)

    def reset(self):
        self.lateral.reset()
        self.longitudinal.reset()

    def act(self, plan, ego_speed: float, dt: float = 0.05) -> ControlAction:
        cfg = self.cfg
        target = desired_speed(plan, cfg.waypoint_dt)
        delta, _ = heading_angle(aim_point(plan))
        # left of the heading is positive delta; left steer is negative
        steer = _clamp(self.lateral.step(-delta, dt), -1.0, 1.0)
        throttle = _clamp(self.longitudinal.step(target - ego_speed, dt), -1.0, cfg.max_throttle)
        if target < cfg.brake_speed:
            throttle = -1.0
        return ControlAction(steer, throttle)


def act(plan, ego_speed: float, controller: Controller, dt: float = 0.05) -> ControlAction:
    return controller.act(plan, ego_speed, dt)
