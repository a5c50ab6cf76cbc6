from .checkpoint import load_checkpoint, params_digest, save_checkpoint
from .init import init_layer_norm, init_linear, rng_for, uniform
from .optim import AdamState, adam_step
from .tensor import (
    Gradients,
    ShapeError,
    Tape,
    Tensor,
    absolute,
    activation,
    add,
    add_bias,
    attend,
    backward,
    concat,
    conv2d,
    flatten,
    index,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    tanh,
    tile_rows,
    transpose,
)


def dense(params: dict, name: str, x: Tensor) -> Tensor:
    """Apply the affine layer ``name`` stored in ``params``."""
    return linear(x, params[f"{name}.w"], params.get(f"{name}.b"))


def subset(params: dict, prefix: str) -> dict:
    return {k: v for k, v in params.items() if k.startswith(prefix)}
