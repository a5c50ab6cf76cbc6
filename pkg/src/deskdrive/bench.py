"""Leaderboard-style scoring, report files, and the paired perception ablation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable
from xml.sax.saxutils import escape

import numpy as np

from .simworld import EVENT_KINDS, InfractionEvent, ScenarioSpec, SimConfig, make_scenario, run_episode

DEFAULT_PENALTIES = {
    "collision-pedestrian": 0.50,
    "collision-vehicle": 0.60,
    "collision-layout": 0.65,
    "off-road": 1.0,
    "route-deviation": 1.0,
    "blocked": 1.0,
    "timeout": 1.0,
}

# metric columns in table order; the two traffic-control rows have no simulator counterpart
RATE_COLUMNS = {
    "Collisions pedestrians": "collision-pedestrian",
    "Collisions vehicles": "collision-vehicle",
    "Collisions layout": "collision-layout",
    "Red light infractions": None,
    "Stop sign infractions": None,
    "Off-road infractions": "off-road",
    "Route deviations": "route-deviation",
    "Route timeouts": "timeout",
    "Agent blocked": "blocked",
}
COLUMNS = ("Route", "Driving score", "Route completion", "Infraction penalty", *RATE_COLUMNS, "Km driven")
UNITS = ("units", "score", "percent", "factor", *(["per km"] * len(RATE_COLUMNS)), "km")
AGGREGATE = "aggregate"
KM_FLOOR = 0.001


@dataclass(frozen=True)
class RouteResult:
    route: str
    completion: float
    events: tuple[InfractionEvent, ...] = ()
    duration: float = 0.0
    km: float = 0.0
    route_path: tuple[tuple[float, float], ...] = ()
    ego_path: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.completion <= 100.0:
            raise ValueError(f"completion {self.completion} outside [0, 100]")


def infraction_penalty(events: Iterable, penalties: dict | None = None) -> float:
    penalties = penalties or DEFAULT_PENALTIES
    p = 1.0
    for e in events:
        kind = e.kind if isinstance(e, InfractionEvent) else e
        if kind not in penalties:
            raise ValueError(f"unknown infraction kind {kind!r}")
        p *= penalties[kind]
    return p


def score_route(r: RouteResult, penalties: dict | None = None) -> float:
    """Completion (percent) times the product of per-event penalties."""
    return r.completion * infraction_penalty(r.events, penalties)


def _counts(events) -> dict[str, int]:
    c = dict.fromkeys(EVENT_KINDS, 0)
    for e in events:
        c[e.kind] += 1
    return c


def route_row(r: RouteResult, penalties: dict | None = None) -> dict:
    counts = _counts(r.events)
    km = max(r.km, KM_FLOOR)
    row = {"Route": r.route, "Driving score": score_route(r, penalties), "Route completion": r.completion,
           "Infraction penalty": infraction_penalty(r.events, penalties)}
    for col, kind in RATE_COLUMNS.items():
        row[col] = 0.0 if kind is None else counts[kind] / km
    row["Km driven"] = r.km
    return row


def aggregate_row(results: list[RouteResult], penalties: dict | None = None) -> dict:
    """Scores averaged over routes; infraction rates pooled over total distance."""
    rows = [route_row(r, penalties) for r in results]
    km = sum(r.km for r in results)
    counts = _counts([e for r in results for e in r.events])
    agg = {"Route": AGGREGATE}
    for col in ("Driving score", "Route completion", "Infraction penalty"):
        agg[col] = float(np.mean([row[col] for row in rows]))
    for col, kind in RATE_COLUMNS.items():
        agg[col] = 0.0 if kind is None else counts[kind] / max(km, KM_FLOOR)
    agg["Km driven"] = km
    return agg


@dataclass
class BenchmarkReport:
    results: list[RouteResult]
    penalties: dict = field(default_factory=lambda: dict(DEFAULT_PENALTIES))

    def rows(self) -> list[dict]:
        return [route_row(r, self.penalties) for r in self.results]

    def aggregate(self) -> dict:
        return aggregate_row(self.results, self.penalties)

    @property
    def driving_score(self) -> float:
        return self.aggregate()["Driving score"]

    def collisions(self) -> int:
        return sum(1 for r in self.results for e in r.events if e.kind.startswith("collision"))


def run_benchmark(agent_factory: Callable[[], object], specs: list[ScenarioSpec], sim: SimConfig | None = None,
                  penalties: dict | None = None) -> BenchmarkReport:
    """Run a fresh agent on every scenario of the suite."""
    if not specs:
        raise ValueError("benchmark suite is empty")
    results = []
    for spec in specs:
        world = make_scenario(spec)
        res = run_episode(world, agent_factory(), sim)
        results.append(RouteResult(spec.name, res.completion, tuple(res.events), res.duration, res.distance_km,
                                   tuple(map(tuple, world.route.path.points.tolist())),
                                   tuple(map(tuple, res.path.tolist()))))
    return BenchmarkReport(results, dict(penalties or DEFAULT_PENALTIES))


# report files -----------------------------------------------------------

def write_table(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        w.writerow(UNITS)
        for row in rows:
            w.writerow([row[c] if c == "Route" else repr(float(row[c])) for c in COLUMNS])


def read_table(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected metrics header {header}")
        units = next(r)
        if tuple(units) != UNITS:
            raise ValueError("unexpected units row")
        return [{c: (v if c == "Route" else float(v)) for c, v in zip(header, line)} for line in r]


def write_results(path: Path, results: list[RouteResult]) -> None:
    """One JSON line per route holding everything needed to rescore or replot it."""
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps({"route": r.route, "completion": r.completion, "duration": r.duration, "km": r.km,
                                 "events": [[e.kind, e.time, e.x, e.y, e.actor] for e in r.events],
                                 "route_path": r.route_path, "ego_path": r.ego_path}) + "\n")


def read_results(path: Path) -> list[RouteResult]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(RouteResult(d["route"], d["completion"], tuple(InfractionEvent(*e) for e in d["events"]),
                                   d["duration"], d["km"], tuple(map(tuple, d["route_path"])),
                                   tuple(map(tuple, d["ego_path"]))))
    return out


def write_plots(results: list[RouteResult], directory: Path) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for r in results:
        p = directory / f"{r.route}.svg"
        p.write_text(_svg(r))
        files[f"plot:{r.route}"] = p
    return files


def _svg(r: RouteResult, size: int = 480) -> str:
    pts = np.array(list(r.route_path) + list(r.ego_path) + [(e.x, e.y) for e in r.events]).reshape(-1, 2)
    lo, hi = pts.min(axis=0) - 5.0, pts.max(axis=0) + 5.0
    span = float(max(hi - lo))
    k = size / span

    def xy(x, y):
        # world y grows upwards, SVG y grows downwards
        return (x - lo[0]) * k, size - (y - lo[1]) * k

    def poly(points, cls, colour):
        coords = " ".join("%.2f,%.2f" % xy(x, y) for x, y in points)
        return f'<polyline class="{cls}" points="{coords}" fill="none" stroke="{colour}" stroke-width="2"/>'

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f"<title>{escape(r.route)}</title>",
             f'<rect width="{size}" height="{size}" fill="white"/>',
             poly(r.route_path, "route", "#888888")]
    if len(r.ego_path) >= 2:
        parts.append(poly(r.ego_path, "ego", "#1f4fd1"))
    for e in r.events:
        cx, cy = xy(e.x, e.y)
        parts.append(f'<circle class="event" cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="#d12f1f">'
                     f"<title>{escape(e.kind)} at {e.time:.2f} s</title></circle>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(rep: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """metrics.csv, events.jsonl, routes.jsonl and one SVG plot per route."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ValueError(f"cannot write report to {out}: {exc}") from exc
    files = {"table": out / "metrics.csv", "events": out / "events.jsonl"}
    write_table(files["table"], rep.rows() + [rep.aggregate()])
    with open(files["events"], "w") as fh:
        for r in rep.results:
            for e in r.events:
                fh.write(json.dumps({"route": r.route, "kind": e.kind, "time": e.time, "x": e.x, "y": e.y,
                                     "actor": e.actor}) + "\n")
    files["routes"] = out / "routes.jsonl"
    write_results(files["routes"], rep.results)
    files.update(write_plots(rep.results, out / "plots"))
    return files


# paired ablation ---------------------------------------------------------

@dataclass(frozen=True)
class PairedRow:
    route: str
    detection_collisions: int
    classifier_collisions: int
    detection_score: float
    classifier_score: float

    @property
    def detection_not_worse(self) -> bool:
        return self.detection_collisions <= self.classifier_collisions


def paired_table(detection: BenchmarkReport, classifier: BenchmarkReport) -> list[PairedRow]:
    if [r.route for r in detection.results] != [r.route for r in classifier.results]:
        raise ValueError("ablation reports must cover identical routes in the same order")
    rows = []
    for a, b in zip(detection.results, classifier.results):
        rows.append(PairedRow(a.route, sum(e.kind.startswith("collision") for e in a.events),
                              sum(e.kind.startswith("collision") for e in b.events),
                              score_route(a, detection.penalties), score_route(b, classifier.penalties)))
    return rows


def write_paired_table(path: Path, rows: list[PairedRow]) -> float:
    """Writes the per-seed comparison and returns the share of pairs where detection is not worse."""
    share = sum(r.detection_not_worse for r in rows) / len(rows) if rows else math.nan
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Route", "Detection collisions", "Classifier collisions", "Detection driving score",
                    "Classifier driving score", "Detection not worse"])
        for r in rows:
            w.writerow([r.route, r.detection_collisions, r.classifier_collisions, repr(r.detection_score),
                        repr(r.classifier_score), int(r.detection_not_worse)])
        w.writerow(["share not worse", "", "", "", "", repr(share)])
    return share
