"""Post-norm transformer encoder/decoder over flattened feature-map tokens.

Token tensors are laid out (B, tokens, d). ``positional_encoding`` follows the
channel-major (d, HW) convention and is transposed where it is added.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import (Tensor, add, attend, conv2d, dense, init_layer_norm, init_linear, layer_norm, matmul,
                        relu, reshape, scale, softmax, tile_rows, transpose, uniform)


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 32
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ffn_width: int = 64
    queries: int = 16

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.d_model % 2:
            raise ValueError("d_model must be even for the positional encoding")


def positional_encoding(h: int, w: int, d: int) -> np.ndarray:
    """Fixed 2D sinusoidal encoding of shape (d, h*w).

    The first d/2 channels encode the row, the rest the column. Within each
    half, channel j uses frequency 1 / 10000^(2*(j//2)/(d/2)), sine on even j
    and cosine on odd j.
    """
    if d % 2:
        raise ValueError(f"positional encoding width must be even, got {d}")
    half = d // 2
    j = np.arange(half)
    freq = 1.0 / 10000.0 ** (2 * (j // 2) / half)
    rows, cols = np.divmod(np.arange(h * w), w)

    def block(pos):
        ang = freq[:, None] * pos[None, :]
        return np.where((j % 2 == 0)[:, None], np.sin(ang), np.cos(ang))

    return np.concatenate([block(rows.astype(np.float64)), block(cols.astype(np.float64))], axis=0)


def init_transformer(params: dict, rng, cfg: TransformerConfig, in_channels: int, prefix="tr"):
    d = cfg.d_model
    params[f"{prefix}.proj.w"] = uniform(rng, (d, in_channels, 1, 1), in_channels, f"{prefix}.proj.w")
    params[f"{prefix}.proj.b"] = uniform(rng, (d,), in_channels, f"{prefix}.proj.b")
    for i in range(cfg.encoder_layers):
        p = f"{prefix}.enc{i}"
        _init_attention(params, rng, f"{p}.self", d)
        _init_ffn(params, rng, f"{p}.ffn", d, cfg.ffn_width)
        init_layer_norm(params, f"{p}.ln1", d)
        init_layer_norm(params, f"{p}.ln2", d)
    params[f"{prefix}.queries"] = uniform(rng, (cfg.queries, d), d, f"{prefix}.queries")
    for i in range(cfg.decoder_layers):
        p = f"{prefix}.dec{i}"
        _init_attention(params, rng, f"{p}.self", d)
        _init_attention(params, rng, f"{p}.cross", d)
        _init_ffn(params, rng, f"{p}.ffn", d, cfg.ffn_width)
        for k in (1, 2, 3):
            init_layer_norm(params, f"{p}.ln{k}", d)
    return params


def _init_attention(params, rng, name, d):
    for part in ("q", "k", "v", "o"):
        init_linear(params, rng, f"{name}.{part}", d, d)


def _init_ffn(params, rng, name, d, width):
    init_linear(params, rng, f"{name}.0", d, width)
    init_linear(params, rng, f"{name}.1", width, d)


def multihead_attention(params: dict, name: str, queries: Tensor, keys: Tensor, values: Tensor, heads: int,
                        key_mask: np.ndarray | None = None, log: list | None = None) -> Tensor:
    """Scaled dot-product attention. ``key_mask`` is (B, Nk) with True = attend."""
    b, nq, d = queries.shape
    nk = keys.shape[1]
    dk = d // heads

    def split(t, n):
        return transpose(reshape(t, (b, n, heads, dk)), (0, 2, 1, 3))

    q = split(dense(params, f"{name}.q", queries), nq)
    k = split(dense(params, f"{name}.k", keys), nk)
    v = split(dense(params, f"{name}.v", values), nk)
    scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
    mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
    weights = softmax(scores, axis=-1, mask=mask)
    if log is not None:
        log.append(weights.data)
    ctx = reshape(transpose(attend(weights, v), (0, 2, 1, 3)), (b, nq, d))
    return dense(params, f"{name}.o", ctx)


def _ffn(params, name, x):
    return dense(params, f"{name}.1", relu(dense(params, f"{name}.0", x)))


def _norm(params, name, x):
    return layer_norm(x, params[f"{name}.gamma"], params[f"{name}.beta"])


def _with_pos(x: Tensor, pos: Tensor | None) -> Tensor:
    return x if pos is None else add(x, pos)


def transformer_encode(params: dict, feat: Tensor, cfg: TransformerConfig, use_pos: bool = True,
                       key_mask: np.ndarray | None = None, log: list | None = None, prefix="tr"
                       ) -> tuple[Tensor, Tensor | None]:
    """Feature map (B, c, H, W) -> memory tokens (B, HW, d) and the positional tensor used."""
    x = conv2d(feat, params[f"{prefix}.proj.w"], params[f"{prefix}.proj.b"])
    b, d, h, w = x.shape
    tokens = transpose(reshape(x, (b, d, h * w)), (0, 2, 1))
    pos = None
    if use_pos:
        pos = Tensor(np.broadcast_to(positional_encoding(h, w, d).T, (b, h * w, d)))
    return encode_tokens(params, tokens, cfg, pos, key_mask, log, prefix), pos


def encode_tokens(params, x: Tensor, cfg: TransformerConfig, pos: Tensor | None = None,
                  key_mask=None, log=None, prefix="tr") -> Tensor:
    for i in range(cfg.encoder_layers):
        p = f"{prefix}.enc{i}"
        qk = _with_pos(x, pos)
        x = _norm(params, f"{p}.ln1", add(x, multihead_attention(params, f"{p}.self", qk, qk, x, cfg.heads,
                                                                 key_mask, log)))
        x = _norm(params, f"{p}.ln2", add(x, _ffn(params, f"{p}.ffn", x)))
    return x


def transformer_decode(params: dict, memory: Tensor, cfg: TransformerConfig, pos: Tensor | None = None,
                       key_mask: np.ndarray | None = None, log: list | None = None, prefix="tr",
                       queries: Tensor | None = None) -> Tensor:
    """Learned queries attend to themselves and to ``memory``; returns (B, N, d)."""
    b = memory.shape[0]
    x = tile_rows(queries if queries is not None else params[f"{prefix}.queries"], b)
    keys = _with_pos(memory, pos)
    for i in range(cfg.decoder_layers):
        p = f"{prefix}.dec{i}"
        x = _norm(params, f"{p}.ln1", add(x, multihead_attention(params, f"{p}.self", x, x, x, cfg.heads,
                                                                 log=log)))
        x = _norm(params, f"{p}.ln2", add(x, multihead_attention(params, f"{p}.cross", x, keys, memory, cfg.heads,
                                                                 key_mask, log)))
        x = _norm(params, f"{p}.ln3", add(x, _ffn(params, f"{p}.ffn", x)))
    return x
