"""Minimum-cost bipartite assignment and detection-to-truth matching."""
from __future__ import annotations

import numpy as np

from ..types import Detection


def linear_assignment(cost) -> tuple[np.ndarray, np.ndarray]:
    """Optimal assignment for a rectangular cost matrix.

    Returns ``(rows, cols)`` index arrays of length min(n, m), sorted by row.
    Shortest augmenting paths with row/column potentials, O(n^2 m).
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    if c.shape[0] > c.shape[1]:
        cols, rows = linear_assignment(c.T)
        order = np.argsort(rows)
        return rows[order], cols[order]
    n, m = c.shape
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    # owner[j] = row (1-based) holding column j; column 0 is the virtual root
    owner = np.zeros(m + 1, dtype=int)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    rows, cols = [], []
    for j in range(1, m + 1):
        if owner[j]:
            rows.append(owner[j] - 1)
            cols.append(j - 1)
    rows, cols = np.array(rows, dtype=int), np.array(cols, dtype=int)
    order = np.argsort(rows)
    return rows[order], cols[order]


def match_cost(class_probs: np.ndarray, boxes: np.ndarray, truth: list[Detection]) -> np.ndarray:
    """(N predictions, T truths): one minus the truth-class probability plus box L1."""
    probs = np.asarray(class_probs)
    pred_boxes = np.asarray(boxes)
    if not truth:
        return np.zeros((len(probs), 0))
    cls = np.array([t.class_index for t in truth])
    tb = np.array([t.box for t in truth])
    l1 = np.abs(pred_boxes[:, None, :] - tb[None, :, :]).sum(axis=-1)
    return (1.0 - probs[:, cls]) + l1


def hungarian_match(class_probs: np.ndarray, boxes: np.ndarray, truth: list[Detection]) -> list[tuple[int, int]]:
    """Pairs (prediction index, truth index); every other prediction is no-object."""
    if len(truth) > len(class_probs):
        raise ValueError(f"{len(truth)} truths exceed {len(class_probs)} prediction slots")
    if not truth:
        return []
    rows, cols = linear_assignment(match_cost(class_probs, boxes, truth))
    return sorted(zip(rows.tolist(), cols.tolist()))
