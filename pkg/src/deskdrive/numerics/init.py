from __future__ import annotations

import zlib

import numpy as np

from .tensor import Tensor


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Generator derived from a run seed and string/int tags, stable across processes."""
    words = [int(seed) & 0xFFFFFFFF]
    for t in tags:
        words.append(zlib.crc32(str(t).encode()) if not isinstance(t, int) else t & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


def uniform(rng: np.random.Generator, shape, fan_in: int, name: str | None = None) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), name=name)


def init_linear(params: dict, rng, name: str, fan_in: int, fan_out: int, bias: bool = True):
    params[f"{name}.w"] = uniform(rng, (fan_in, fan_out), fan_in, f"{name}.w")
    if bias:
        params[f"{name}.b"] = uniform(rng, (fan_out,), fan_in, f"{name}.b")


def init_layer_norm(params: dict, name: str, width: int):
    params[f"{name}.gamma"] = Tensor(np.ones(width), name=f"{name}.gamma")
    params[f"{name}.beta"] = Tensor(np.zeros(width), name=f"{name}.beta")
