"""Layer primitives shared by the style encoder and the acoustic model.

Parameters live in a flat name -> Tensor table. Each helper takes the
table plus a dotted prefix, so the whole model serializes as one
named-tensor dictionary.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

import numpy as np

from . import tape
from .errors import ConfigurationError
from .tape import Tensor

ParamTable = Dict[str, Tensor]


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def add_affine(params: ParamTable, prefix: str, d_in: int, d_out: int,
               rng: np.random.Generator, dtype) -> None:
    params[f"{prefix}.w"] = tape.parameter(xavier_uniform(rng, (d_in, d_out), d_in, d_out, dtype))
    params[f"{prefix}.b"] = tape.parameter(np.zeros(d_out, dtype=dtype))


def affine(x: Tensor, params: ParamTable, prefix: str) -> Tensor:
    return x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]


def add_conv1d(params: ParamTable, prefix: str, kernel: int, c_in: int, c_out: int,
               rng: np.random.Generator, dtype) -> None:
    if kernel % 2 == 0:
        raise ConfigurationError("conv kernels must be odd for same padding")
    fan_in = kernel * c_in
    fan_out = kernel * c_out
    params[f"{prefix}.w"] = tape.parameter(
        xavier_uniform(rng, (kernel, c_in, c_out), fan_in, fan_out, dtype)
    )
    params[f"{prefix}.b"] = tape.parameter(np.zeros(c_out, dtype=dtype))


def conv1d(x: Tensor, params: ParamTable, prefix: str) -> Tensor:
    return tape.conv1d_same(x, params[f"{prefix}.w"], params[f"{prefix}.b"])


def add_layer_norm(params: ParamTable, prefix: str, dim: int, dtype) -> None:
    params[f"{prefix}.gamma"] = tape.parameter(np.ones(dim, dtype=dtype))
    params[f"{prefix}.beta"] = tape.parameter(np.zeros(dim, dtype=dtype))


def normalize_rows(x: Tensor, eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(var + eps) with population statistics per row."""
    mu = tape.tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = tape.tmean(centered * centered, axis=-1, keepdims=True)
    return centered / tape.sqrt(var + eps)


def layer_norm(x: Tensor, params: ParamTable, prefix: str, eps: float = 1e-5) -> Tensor:
    return normalize_rows(x, eps) * params[f"{prefix}.gamma"] + params[f"{prefix}.beta"]


def add_attention(params: ParamTable, prefix: str, d_model: int,
                  rng: np.random.Generator, dtype) -> None:
    # No key bias: a constant key offset shifts every score in a query's
    # row equally, which softmax cancels, so the parameter would be inert.
    for name in ("wq", "wv", "wo"):
        add_affine(params, f"{prefix}.{name}", d_model, d_model, rng, dtype)
    params[f"{prefix}.wk.w"] = tape.parameter(
        xavier_uniform(rng, (d_model, d_model), d_model, d_model, dtype)
    )


def multi_head_attention(
    x: Tensor,
    params: ParamTable,
    prefix: str,
    n_heads: int,
    override_rows: Optional[np.ndarray] = None,
) -> Tuple[Tensor, np.ndarray]:
    """Self-attention over the rows of ``x`` (L x D).

    Returns the output and the effective post-softmax weights with shape
    (heads, L, L). When ``override_rows`` (length L, non-negative) is
    given, every post-softmax row of every head is replaced by it, with no
    renormalization.
    """
    length, d_model = x.shape
    if d_model % n_heads != 0:
        raise ConfigurationError(f"d_model {d_model} not divisible by {n_heads} heads")
    d_head = d_model // n_heads

    def split(t: Tensor) -> Tensor:
        return tape.swapaxes(tape.reshape(t, (length, n_heads, d_head)), 0, 1)

    q = split(affine(x, params, f"{prefix}.wq"))
    k = split(x @ params[f"{prefix}.wk.w"])
    v = split(affine(x, params, f"{prefix}.wv"))

    scores = (q @ tape.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(d_head))
    weights = tape.softmax(scores)
    if override_rows is not None:
        replaced = np.broadcast_to(
            np.asarray(override_rows, dtype=x.dtype), (n_heads, length, length)
        ).copy()
        weights = tape.constant(replaced)

    context = weights @ v
    merged = tape.reshape(tape.swapaxes(context, 0, 1), (length, d_model))
    out = affine(merged, params, f"{prefix}.wo")
    return out, np.array(weights.data, copy=True)


def dropout(x: Tensor, rate: float, train: bool, rng: Optional[np.random.Generator]) -> Tensor:
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ConfigurationError("training-mode dropout needs an RNG")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * tape.constant(keep)


def sinusoidal_positions(length: int, dim: int, dtype) -> np.ndarray:
    """Fixed sin/cos position table, shape (length, dim)."""
    position = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-math.log(10000.0) / dim))
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(position * div)
    table[:, 1::2] = np.cos(position * div[: table[:, 1::2].shape[1]])
    return table.astype(dtype)


def zero_grads(params: ParamTable) -> None:
    for p in params.values():
        p.grad = None


def collect_grads(params: ParamTable) -> Dict[str, np.ndarray]:
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
