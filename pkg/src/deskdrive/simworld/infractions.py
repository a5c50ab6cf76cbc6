from __future__ import annotations

from dataclasses import dataclass

from .geometry import point_rect_distance
from .world import SimConfig, WorldState, on_road

EVENT_KINDS = ("collision-pedestrian", "collision-vehicle", "collision-layout",
               "off-road", "route-deviation", "blocked", "timeout")
COLLISION_KIND = {"pedestrian": "collision-pedestrian", "vehicle": "collision-vehicle",
                  "obstacle": "collision-layout"}
TERMINAL_KINDS = frozenset({"route-deviation", "blocked", "timeout"})


@dataclass(frozen=True)
class InfractionEvent:
    kind: str
    time: float
    x: float
    y: float
    actor: int = -1

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown infraction kind {self.kind!r}")


def contacts(w: WorldState, cfg: SimConfig) -> set[int]:
    ex, ey = w.ego.x, w.ego.y
    hit = set()
    for a in w.actors:
        x, y, th = a.pose
        if abs(x - ex) > 10 or abs(y - ey) > 10:
            continue
        if point_rect_distance((ex, ey), x, y, th, a.length, a.width)[0] < cfg.ego_radius:
            hit.add(a.id)
    return hit


def detect_infractions(prev: WorldState | None, nxt: WorldState, cfg: SimConfig | None = None
                       ) -> list[InfractionEvent]:
    """Events that begin between ``prev`` and ``nxt``; a violation already
    present in ``prev`` is not reported again."""
    cfg = cfg or SimConfig()
    t, x, y = nxt.time, nxt.ego.x, nxt.ego.y
    events = []
    before = contacts(prev, cfg) if prev is not None else set()
    kinds = {a.id: a.kind for a in nxt.actors}
    for aid in sorted(contacts(nxt, cfg) - before):
        events.append(InfractionEvent(COLLISION_KIND[kinds[aid]], t, x, y, aid))
    if not on_road(nxt.lanes, x, y) and (prev is None or on_road(prev.lanes, prev.ego.x, prev.ego.y)):
        events.append(InfractionEvent("off-road", t, x, y))
    dist_now = nxt.route.path.project((x, y))[2]
    dist_before = prev.route.path.project((prev.ego.x, prev.ego.y))[2] if prev is not None else 0.0
    if dist_now > cfg.deviation_limit >= dist_before:
        events.append(InfractionEvent("route-deviation", t, x, y))
    low_before = prev.low_speed_time if prev is not None else 0.0
    if nxt.low_speed_time >= cfg.blocked_time > low_before:
        events.append(InfractionEvent("blocked", t, x, y))
    t_before = prev.time if prev is not None else 0.0
    if nxt.time >= nxt.route.time_budget > t_before:
        events.append(InfractionEvent("timeout", t, x, y))
    return events
