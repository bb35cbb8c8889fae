"""Hierarchical-interpolation forecaster with multi-rate pooling and backcast residuals."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..autodiff import Tensor, linear, matmul, max_pool1d, relu, sub
from .base import Arch, ModelInstance, prepare_context


@lru_cache(maxsize=64)
def interp_matrix(n_knots: int, n_out: int) -> np.ndarray:
    """(n_knots, n_out) matrix for linear interpolation with half-pixel centers.

    ``knots @ interp_matrix(k, n)`` resamples the last axis from ``k`` to ``n``
    points; it is the identity when ``k == n``.
    """
    mat = np.zeros((n_knots, n_out))
    scale = n_knots / n_out
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        lo = min(int(math.floor(src)), n_knots - 1)
        hi = min(lo + 1, n_knots - 1)
        frac = src - lo
        mat[lo, i] += 1.0 - frac
        mat[hi, i] += frac
    mat.setflags(write=False)
    return mat


def nhits_components(m: ModelInstance, context) -> tuple[list[Tensor], Tensor]:
    """Per-stack forecast contributions and the residual left after the last stack."""
    ctx, _ = prepare_context(m, context, Arch.NHITS)
    cfg, p = m.config, m.params
    L, H = cfg.input_size, cfg.horizon
    resid = Tensor(ctx)
    forecasts = []
    for s, (k, r) in enumerate(zip(cfg.pool_kernels, cfg.interp_factors)):
        h = max_pool1d(resid, k)
        for j in range(cfg.mlp_depth):
            h = relu(linear(h, p[f"stack{s}.fc{j}.weight"], p[f"stack{s}.fc{j}.bias"]))
        theta = linear(h, p[f"stack{s}.theta.weight"], p[f"stack{s}.theta.bias"])
        n_back = math.ceil(L / r)
        backcast = matmul(theta[:, :n_back], interp_matrix(n_back, L))
        forecasts.append(matmul(theta[:, n_back:], interp_matrix(math.ceil(H / r), H)))
        resid = sub(resid, backcast)
    return forecasts, resid


def nhits_forward(m: ModelInstance, context) -> Tensor:
    squeeze = np.ndim(context.data if isinstance(context, Tensor) else context) == 1
    forecasts, _ = nhits_components(m, context)
    out = forecasts[0]
    for f in forecasts[1:]:
        out = out + f
    return out[0] if squeeze else out
