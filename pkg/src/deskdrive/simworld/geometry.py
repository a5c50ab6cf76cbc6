from __future__ import annotations

import math
from functools import cached_property

import numpy as np


class Polyline:
    """Piecewise-linear path with arc-length parametrisation."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("a polyline needs at least two 2D points")
        pts.setflags(write=False)
        self.points = pts
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self.seg_len <= 0):
            raise ValueError("polyline has repeated points")
        self.s = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.dirs = seg / self.seg_len[:, None]

    def __eq__(self, other):
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def _seg_index(self, s: float) -> int:
        i = int(np.searchsorted(self.s, s, side="right")) - 1
        return min(max(i, 0), len(self.seg_len) - 1)

    def point_at(self, s: float) -> tuple[float, float]:
        """Position at arc length ``s``; extrapolates linearly past either end."""
        i = self._seg_index(s)
        t = s - self.s[i]
        p = self.points[i] + t * self.dirs[i]
        return float(p[0]), float(p[1])

    def heading_at(self, s: float) -> float:
        d = self.dirs[self._seg_index(s)]
        return math.atan2(d[1], d[0])

    def points_at(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.seg_len) - 1)
        return self.points[i] + (s - self.s[i])[:, None] * self.dirs[i]

    def project(self, p) -> tuple[float, float, float]:
        """Closest point: (arc length, signed lateral offset with left positive, distance)."""
        p = np.asarray(p, dtype=np.float64)
        rel = p - self.points[:-1]
        t = np.clip(np.einsum("ij,ij->i", rel, self.dirs), 0.0, self.seg_len)
        foot = self.points[:-1] + t[:, None] * self.dirs
        d2 = np.sum((p - foot) ** 2, axis=1)
        i = int(np.argmin(d2))
        lateral = self.dirs[i, 0] * rel[i, 1] - self.dirs[i, 1] * rel[i, 0]
        return float(self.s[i] + t[i]), float(lateral), float(math.sqrt(d2[i]))

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Distance from each of ``pts`` (P, 2) to the polyline."""
        a = self.points[:-1]
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("psk,sk->ps", rel, self.dirs), 0.0, self.seg_len)
        d = rel - t[..., None] * self.dirs[None]
        return np.sqrt(np.min(np.einsum("psk,psk->ps", d, d), axis=1))

    def offset(self, lateral: float) -> "Polyline":
        """Parallel curve at signed lateral distance (left positive)."""
        normals = np.stack([-self.dirs[:, 1], self.dirs[:, 0]], axis=1)
        vert = np.empty_like(self.points)
        vert[0], vert[-1] = normals[0], normals[-1]
        mid = normals[:-1] + normals[1:]
        vert[1:-1] = mid / np.linalg.norm(mid, axis=1, keepdims=True)
        return Polyline(self.points + lateral * vert)

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1])

    def slice(self, s0: float, s1: float) -> "Polyline":
        inner = self.points[(self.s > s0 + 1e-9) & (self.s < s1 - 1e-9)]
        return Polyline(np.concatenate([[self.point_at(s0)], inner, [self.point_at(s1)]]))

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def build_path(start, heading: float, pieces, step: float = 1.0) -> Polyline:
    """Chain of ``("straight", length)`` and ``("arc", length, curvature)`` pieces."""
    x, y = float(start[0]), float(start[1])
    th = float(heading)
    pts = [(x, y)]
    for piece in pieces:
        kind, length = piece[0], float(piece[1])
        kappa = float(piece[2]) if kind == "arc" else 0.0
        n = max(1, int(math.ceil(length / step)))
        ds = length / n
        for _ in range(n):
            if kappa == 0.0:
                x += ds * math.cos(th)
                y += ds * math.sin(th)
            else:
                th2 = th + kappa * ds
                x += (math.sin(th2) - math.sin(th)) / kappa
                y += (math.cos(th) - math.cos(th2)) / kappa
                th = th2
            pts.append((x, y))
    return Polyline(pts)


def join(*lines: Polyline) -> Polyline:
    pts = [lines[0].points]
    for ln in lines[1:]:
        p = ln.points
        if np.allclose(p[0], pts[-1][-1]):
            p = p[1:]
        pts.append(p)
    return Polyline(np.concatenate(pts))


def to_ego(px, py, ex: float, ey: float, eth: float):
    """World point(s) to an ego frame at (ex, ey) heading eth (x fwd, y left)."""
    dx, dy = np.asarray(px) - ex, np.asarray(py) - ey
    c, s = math.cos(eth), math.sin(eth)
    return c * dx + s * dy, -s * dx + c * dy


def rect_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    return np.stack([x + c * local[:, 0] - s * local[:, 1], y + s * local[:, 0] + c * local[:, 1]], 1)


def point_rect_distance(pts, x: float, y: float, heading: float, length: float, width: float):
    """Euclidean distance from point(s) to an oriented rectangle (0 inside)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    lx, ly = to_ego(pts[:, 0], pts[:, 1], x, y, heading)
    dx = np.maximum(np.abs(lx) - length / 2, 0.0)
    dy = np.maximum(np.abs(ly) - width / 2, 0.0)
    return np.hypot(dx, dy)
