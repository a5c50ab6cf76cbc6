"""Schematic pinhole front camera with exact ground-truth boxes.

Every colour is an integer palette code over 255 so images survive a uint8
round trip bit-exactly. Boxes are the integer pixel rectangles that get
filled, normalised by the image size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..types import CLASSES, Detection, label_of
from .geometry import to_ego
from .world import WorldState

PALETTE = {
    "sky": (135, 206, 235),
    "ground": (60, 110, 60),
    "road": (90, 90, 90),
    "line": (230, 230, 230),
    "vehicle": (30, 60, 200),
    "pedestrian": (220, 40, 40),
    "obstacle": (240, 200, 20),
}


@dataclass(frozen=True)
class Camera:
    size: int = 64
    focal_ratio: float = 0.5625
    horizon_ratio: float = 0.375
    height: float = 1.5
    near: float = 1.0
    far: float = 45.0
    road_far: float = 60.0

    @property
    def focal(self) -> float:
        return self.focal_ratio * self.size

    @property
    def horizon(self) -> float:
        return self.horizon_ratio * self.size


@lru_cache(maxsize=8)
def _ground_rays(cam: Camera, bands: int = 12):
    n = cam.size
    v = np.arange(n) + 0.5
    u = np.arange(n) + 0.5
    rows = np.nonzero(v - cam.horizon > 0)[0]
    depth = cam.focal * cam.height / (v[rows] - cam.horizon)
    keep = depth <= cam.road_far
    rows, depth = rows[keep], depth[keep]
    rr, cc = np.meshgrid(rows, np.arange(n), indexing="ij")
    dd = np.repeat(depth[:, None], n, axis=1)
    lat = (n / 2 - u[cc]) * dd / cam.focal
    rr, cc, dd, lat = rr.ravel(), cc.ravel(), dd.ravel(), lat.ravel()
    # sorted by range from the camera so bands are contiguous slices
    ranges = np.hypot(dd, lat)
    order = np.argsort(ranges, kind="stable")
    edges = np.linspace(0, len(order), bands + 1).astype(int)
    return (rr[order], cc[order], dd[order], lat[order], ranges[order],
            tuple(zip(edges[:-1], edges[1:])))


def _lane_distance(line, pts, ranges, bands, ex, ey, margin):
    """Distance to the lane centreline, exact wherever it is at most ``margin``.

    Ground points are grouped into bands by their range from the camera. By the
    triangle inequality a segment whose range interval misses a band's interval
    by more than ``margin`` cannot be within ``margin`` of any point in it.
    """
    a, b = line.points[:-1], line.points[1:]
    rel = np.array([ex, ey]) - a
    t = np.clip(np.einsum("ij,ij->i", rel, line.dirs), 0.0, line.seg_len)
    seg_near = np.hypot(*(rel - t[:, None] * line.dirs).T)
    seg_far = np.maximum(np.hypot(*rel.T), np.hypot(b[:, 0] - ex, b[:, 1] - ey))
    out = np.full(len(pts), np.inf)
    for lo, hi in bands:
        r0, r1 = ranges[lo], ranges[hi - 1]
        idx = np.nonzero((seg_near <= r1 + margin) & (seg_far >= r0 - margin))[0]
        if len(idx) == 0:
            continue
        sa, dirs, seg_len = a[idx], line.dirs[idx], line.seg_len[idx]
        relp = pts[lo:hi, None, :] - sa[None]
        tp = np.clip(np.einsum("psk,sk->ps", relp, dirs), 0.0, seg_len)
        dv = relp - tp[..., None] * dirs[None]
        out[lo:hi] = np.sqrt(np.min(np.einsum("psk,psk->ps", dv, dv), axis=1))
    return out


def project_actor(cam: Camera, corners_x, corners_y, height: float):
    """Pixel rectangle (left, top, right, bottom) of an upright box, or None."""
    if np.min(corners_x) < cam.near or np.min(corners_x) > cam.far:
        return None
    f, n = cam.focal, cam.size
    u = n / 2 - f * corners_y / corners_x
    v_bot = cam.horizon + f * cam.height / corners_x
    v_top = cam.horizon + f * (cam.height - height) / corners_x
    left, right = math.floor(float(u.min())), math.ceil(float(u.max()))
    top, bottom = math.floor(float(v_top.min())), math.ceil(float(v_bot.max()))
    left, right = max(left, 0), min(right, n)
    top, bottom = max(top, 0), min(bottom, n)
    if right - left < 1 or bottom - top < 1:
        return None
    return left, top, right, bottom


def render_front_view(w: WorldState, cam: Camera | None = None) -> tuple[np.ndarray, list[Detection]]:
    cam = cam or Camera()
    n = cam.size
    codes = np.empty((n, n, 3), dtype=np.uint8)
    hz = int(math.ceil(cam.horizon - 0.5))
    codes[:hz] = PALETTE["sky"]
    codes[hz:] = PALETTE["ground"]

    e = w.ego
    rr, cc, dd, lat, ranges, bands = _ground_rays(cam)
    c, s = math.cos(e.heading), math.sin(e.heading)
    pts = np.stack([e.x + c * dd - s * lat, e.y + s * dd + c * lat], axis=1)
    road = np.zeros(len(pts), dtype=bool)
    line = np.zeros(len(pts), dtype=bool)
    tol = np.maximum(0.12, 0.6 * dd / cam.focal)
    for lane in w.lanes:
        d = _lane_distance(lane.centerline, pts, ranges, bands, e.x, e.y, lane.width / 2 + 2.0)
        road |= d <= lane.width / 2 + tol
        line |= np.abs(d - lane.width / 2) <= tol
    codes[rr[road], cc[road]] = PALETTE["road"]
    codes[rr[line], cc[line]] = PALETTE["line"]

    drawn = []
    for a in w.actors:
        x, y, th = a.pose
        if (x - e.x) ** 2 + (y - e.y) ** 2 > (cam.far + 5.0) ** 2:
            continue
        cx, cy = _corners(x, y, th, a.length, a.width)
        ex_, ey_ = to_ego(cx, cy, e.x, e.y, e.heading)
        rect = project_actor(cam, ex_, ey_, a.height)
        if rect is not None:
            drawn.append((float(np.min(ex_)), a.kind, rect))
    drawn.sort(key=lambda t: -t[0])
    owner = np.full((n, n), -1)
    for i, (_, kind, (l, t, r, b)) in enumerate(drawn):
        codes[t:b, l:r] = PALETTE[kind]
        owner[t:b, l:r] = i
    # fully hidden actors are not reported; partly hidden ones keep their whole box
    seen = set(np.unique(owner).tolist())
    dets = []
    for i in reversed(range(len(drawn))):
        if i not in seen:
            continue
        _, kind, (l, t, r, b) = drawn[i]
        box = ((l + r) / 2 / n, (t + b) / 2 / n, (r - l) / n, (b - t) / n)
        dets.append(Detection(label_of(CLASSES.index(kind)), box))
    image = codes.transpose(2, 0, 1).astype(np.float64) / 255.0
    return image, dets


def _corners(x, y, th, length, width):
    c, s = math.cos(th), math.sin(th)
    hl, hw = length / 2, width / 2
    lx = np.array([hl, hl, -hl, -hl])
    ly = np.array([hw, -hw, -hw, hw])
    return x + c * lx - s * ly, y + s * lx + c * ly


def encode_image(image: np.ndarray) -> np.ndarray:
    """Lossless uint8 codes for a rendered image; rejects off-palette values."""
    codes = np.rint(image * 255.0)
    if not np.array_equal(codes / 255.0, image):
        raise ValueError("image is not an exact palette rendering")
    return codes.astype(np.uint8)


def decode_image(codes: np.ndarray) -> np.ndarray:
    return codes.astype(np.float64) / 255.0
