"""Parameter checkpoints: JSON manifest header followed by raw little-endian f64.

Layout: 8-byte magic, 8-byte little-endian manifest length, UTF-8 JSON
manifest, then the concatenated arrays. Offsets in the manifest are relative
to the start of the array block.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"DDCKPT01"


def save_checkpoint(path, params: dict[str, Tensor | np.ndarray], meta: dict | None = None) -> str:
    """Write ``params`` to ``path``; returns the sha256 of the file."""
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.asarray(np.asarray(getattr(params[name], "data", params[name])),
                         dtype="<f8", order="C")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"params": entries, "meta": meta or {}}, sort_keys=True).encode()
    payload = MAGIC + struct.pack("<Q", len(manifest)) + manifest + b"".join(blobs)
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + n])
    base = 16 + n
    params = {}
    for e in manifest["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=start).reshape(e["shape"])
        params[e["name"]] = Tensor(arr, name=e["name"])
    return params, manifest["meta"]


def params_digest(params: dict[str, Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())
    return h.hexdigest()
