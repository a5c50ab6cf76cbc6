"""Central finite-difference oracle shared by the gradient tests."""
from __future__ import annotations

import numpy as np

from deskdrive.numerics import Tape, Tensor, backward


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_inputs(fn, arrays, step=1e-5, max_coords=None, rng=None):
    """Compare analytic gradients of scalar ``fn(*tensors)`` to central differences.

    Returns the worst relative error over the probed coordinates.
    """
    tensors = [Tensor(a) for a in arrays]
    with Tape() as tape:
        loss = fn(*tensors)
    grads = backward(tape, loss)
    worst = 0.0
    for t, a in zip(tensors, arrays):
        g = grads[t]
        coords = list(np.ndindex(a.shape))
        if max_coords is not None and len(coords) > max_coords:
            pick = (rng or np.random.default_rng(0)).choice(len(coords), max_coords, replace=False)
            coords = [coords[i] for i in pick]
        for c in coords:
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            i = next(k for k, x in enumerate(arrays) if x is a)
            plus[i][c] += step
            minus[i][c] -= step
            fp = fn(*[Tensor(x) for x in plus]).item()
            fm = fn(*[Tensor(x) for x in minus]).item()
            num = (fp - fm) / (2 * step)
            worst = max(worst, float(rel_err(g[c], num)))
    return worst


class KinkCrossed(Exception):
    """A probe moved some relu or abs input across zero, so the central difference is not an oracle there."""


def _kink_signs(tape: Tape) -> list[np.ndarray]:
    return [np.sign(n.inputs[0].data) for n in tape.nodes if n.op in ("relu", "abs")]


def check_params(loss_fn, params: dict[str, Tensor], rng, step=1e-5, coords_per_param=2, smooth_only=False):
    """Finite-difference check on named parameters.

    Probes a random direction over all parameters plus a few random
    coordinates of every tensor whose gradient is large enough for a central
    difference to resolve. ``loss_fn(params) -> Tensor``. With ``smooth_only``
    a probe that straddles a relu/abs kink raises ``KinkCrossed`` instead of
    reporting a meaningless difference.
    """
    with Tape() as tape:
        loss = loss_fn(params)
    grads = backward(tape, loss).for_params(params)
    base_signs = _kink_signs(tape)

    def at(delta: dict[str, np.ndarray]):
        shifted = {k: Tensor(p.data + delta[k]) if k in delta else p for k, p in params.items()}
        if not smooth_only:
            return loss_fn(shifted).item()
        with Tape() as probe:
            value = loss_fn(shifted).item()
        if any(not np.array_equal(a, b) for a, b in zip(base_signs, _kink_signs(probe))):
            raise KinkCrossed
        return value

    errs = []
    direction = {k: rng.standard_normal(p.shape) for k, p in params.items()}
    num = (at({k: step * d for k, d in direction.items()})
           - at({k: -step * d for k, d in direction.items()})) / (2 * step)
    ana = sum(float(np.sum(grads[k] * d)) for k, d in direction.items())
    errs.append(float(rel_err(ana, num)))
    # below this magnitude a step-1e-5 central difference is dominated by roundoff
    floor = 1e-6 * max(1.0, abs(loss.item()))
    for k, p in params.items():
        usable = np.argwhere(np.abs(grads[k]) >= floor)
        if len(usable) == 0:
            continue
        for _ in range(coords_per_param):
            c = tuple(int(v) for v in usable[rng.integers(len(usable))])
            e = np.zeros(p.shape)
            e[c] = step
            num = (at({k: e}) - at({k: -e})) / (2 * step)
            errs.append(float(rel_err(grads[k][c], num)))
    return max(errs)
