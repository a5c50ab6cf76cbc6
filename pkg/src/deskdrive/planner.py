"""GRU waypoint decoder.

The hidden state starts from a linear embedding of the ego position, which
is the origin of its own frame, so only the embedding bias survives. Each
step consumes the fused vector concatenated with the goal point and emits one
waypoint through an affine head. Outputs are returned goal-first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, add, concat, dense, init_linear, mul, reshape, sigmoid, sub, tanh, transpose


@dataclass(frozen=True)
class PlannerConfig:
    input_width: int = 64
    hidden: int = 64
    waypoints: int = 4

    def __post_init__(self):
        if self.waypoints < 2:
            raise ValueError("a plan needs at least two waypoints")


def init_planner(params: dict, rng, cfg: PlannerConfig) -> dict:
    x_width = cfg.input_width + 2
    init_linear(params, rng, "planner.h0", 2, cfg.hidden)
    for gate in ("z", "r", "h"):
        init_linear(params, rng, f"planner.gru.{gate}", cfg.hidden + x_width, cfg.hidden)
    init_linear(params, rng, "planner.head", cfg.hidden, 2)
    return params


def gru_cell(params: dict, h: Tensor, x: Tensor, prefix: str = "planner.gru") -> Tensor:
    """z = s(Wz[h,x]), r = s(Wr[h,x]), c = tanh(Wh[r*h, x]), h' = (1-z)*c + z*h."""
    width = params[f"{prefix}.z.w"].shape[0]
    if h.shape[-1] + x.shape[-1] != width:
        raise ValueError(f"gru_cell: hidden {h.shape} and input {x.shape} do not fit weights of width {width}")
    hx = concat([h, x], axis=-1)
    z = sigmoid(dense(params, f"{prefix}.z", hx))
    r = sigmoid(dense(params, f"{prefix}.r", hx))
    cand = tanh(dense(params, f"{prefix}.h", concat([mul(r, h), x], axis=-1)))
    # (1 - z) * cand + z * h, written to avoid a constant ones tensor
    return add(cand, mul(z, sub(h, cand)))


def initial_hidden(params: dict, batch: int) -> Tensor:
    """Embedding of the ego position, the origin of the ego frame."""
    return dense(params, "planner.h0", Tensor(np.zeros((batch, 2))))


def waypoint_head(params: dict, h: Tensor) -> Tensor:
    return dense(params, "planner.head", h)


def rollout_waypoints(params: dict, fused: Tensor, goal, cfg: PlannerConfig) -> Tensor:
    """(B, K, 2) ego-frame waypoints, index 0 nearest the goal."""
    b = fused.shape[0]
    goal = goal if isinstance(goal, Tensor) else Tensor(np.asarray(goal, dtype=np.float64).reshape(b, 2))
    x = concat([fused, goal], axis=-1)
    h = initial_hidden(params, b)
    outs = []
    for _ in range(cfg.waypoints):
        h = gru_cell(params, h, x)
        outs.append(waypoint_head(params, h))
    # stack steps along a new axis: (K, B, 2) -> (B, K, 2)
    stacked = reshape(concat(outs, axis=0), (cfg.waypoints, b, 2))
    return transpose(stacked, (1, 0, 2))
