"""Patch-token transformer encoder with instance normalization."""
from __future__ import annotations

import math

import numpy as np

from ..autodiff import (
    Tensor,
    add,
    gelu,
    layer_norm,
    linear,
    matmul,
    mul,
    reshape,
    softmax,
    transpose,
)
from ..errors import InvalidArgument
from .base import Arch, ModelInstance, prepare_context

NORM_EPS = 1e-5


def patchtst_patch(context, patch_length: int, stride: int | None = None) -> np.ndarray:
    """Split the last axis into non-overlapping patches.

    When the length is not a multiple of ``patch_length`` the series is
    extended by repeating its last value, so the final patch is complete.
    """
    x = np.asarray(context, dtype=np.float64)
    L = x.shape[-1]
    stride = patch_length if stride is None else stride
    if not 1 <= patch_length <= L:
        raise InvalidArgument(f"patch_length {patch_length} outside [1, {L}]")
    if stride != patch_length:
        raise InvalidArgument("only non-overlapping patches (stride == patch_length) are supported")
    n = math.ceil(L / patch_length)
    pad = n * patch_length - L
    if pad:
        x = np.concatenate([x, np.repeat(x[..., -1:], pad, axis=-1)], axis=-1)
    return x.reshape(x.shape[:-1] + (n, patch_length))


def _affine_norm(x: Tensor, p, prefix: str) -> Tensor:
    return add(mul(layer_norm(x), p[f"{prefix}.gain"]), p[f"{prefix}.shift"])


def _attention(x: Tensor, p, prefix: str, n_heads: int, capture: list | None) -> Tensor:
    B, N, d = x.shape
    dh = d // n_heads

    def heads(name):
        t = linear(x, p[f"{prefix}.{name}.weight"], p.get(f"{prefix}.{name}.bias"))
        return transpose(reshape(t, (B, N, n_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    weights = softmax(scores, axis=-1)
    if capture is not None:
        capture.append(weights.data)
    ctx = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (B, N, d))
    return linear(ctx, p[f"{prefix}.o.weight"], p[f"{prefix}.o.bias"])


def patchtst_forward(m: ModelInstance, context, capture: list | None = None) -> Tensor:
    """Forecast; attention weights of each layer are appended to ``capture`` if given."""
    ctx, squeeze = prepare_context(m, context, Arch.PATCHTST)
    cfg, p = m.config, m.params
    mu = ctx.mean(axis=1, keepdims=True)
    scale = ctx.std(axis=1, keepdims=True) + NORM_EPS
    patches = patchtst_patch((ctx - mu) / scale, cfg.patch_length)
    B, N = patches.shape[:2]

    h = add(linear(Tensor(patches), p["embed.weight"], p["embed.bias"]), p["pos"])
    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        h = add(h, _attention(_affine_norm(h, p, f"{pre}.ln1"), p, f"{pre}.attn", cfg.n_heads, capture))
        f = _affine_norm(h, p, f"{pre}.ln2")
        f = linear(gelu(linear(f, p[f"{pre}.ff1.weight"], p[f"{pre}.ff1.bias"])),
                   p[f"{pre}.ff2.weight"], p[f"{pre}.ff2.bias"])
        h = add(h, f)
    h = _affine_norm(h, p, "final_ln")
    y = linear(reshape(h, (B, N * cfg.hidden_size)), p["head.weight"], p["head.bias"])
    out = add(mul(y, scale), mu)
    return out[0] if squeeze else out
