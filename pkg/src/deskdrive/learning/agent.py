"""Closed-loop student: camera frame -> frozen perception -> fusion + planner -> PID."""
from __future__ import annotations

import numpy as np

from ..control import ControlAction, Controller
from ..simworld import Rig, WorldState, render_front_view
from .data import goal_and_command
from .model import PolicyConfig, perceive, policy_forward


class StudentAgent:
    def __init__(self, cfg: PolicyConfig, params: dict, perception: dict, rig: Rig | None = None):
        self.cfg, self.params, self.perception = cfg, params, perception
        self.rig = rig or Rig()
        self.controller = Controller(self.rig.control)

    def reset(self, w: WorldState | None = None):
        self.controller.reset()

    def plan(self, w: WorldState) -> np.ndarray:
        img, _ = render_front_view(w, self.rig.camera)
        pooled, block = perceive(self.cfg, self.perception, img[None])
        goal, cmd = goal_and_command(w)
        out = policy_forward(self.params, self.cfg, pooled, block, [w.ego.speed], [cmd], np.array([goal]))
        return out.data[0]

    def act(self, w: WorldState) -> tuple[np.ndarray, ControlAction]:
        plan = self.plan(w)
        return plan, self.controller.act(plan, w.ego.speed, self.rig.sim.dt)
