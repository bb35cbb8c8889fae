"""Decomposition-linear forecaster: moving-average trend plus remainder, one linear map each."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import Tensor, add, linear
from ..errors import InvalidArgument
from .base import Arch, ModelInstance, prepare_context


def dlinear_decompose(context, kernel: int = 25) -> tuple[np.ndarray, np.ndarray]:
    """Centered moving average with edge replication; returns ``(trend, remainder)``.

    Works along the last axis, so a batch of contexts decomposes in one call.
    """
    x = np.asarray(context, dtype=np.float64)
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidArgument(f"kernel must be odd and positive, got {kernel}")
    if kernel > x.shape[-1]:
        raise InvalidArgument(f"kernel {kernel} longer than context {x.shape[-1]}")
    half = (kernel - 1) // 2
    if half == 0:
        trend = x.copy()
    else:
        padded = np.concatenate(
            [np.repeat(x[..., :1], half, axis=-1), x, np.repeat(x[..., -1:], half, axis=-1)],
            axis=-1,
        )
        trend = sliding_window_view(padded, kernel, axis=-1).mean(axis=-1)
    return trend, x - trend


def dlinear_forward(m: ModelInstance, context) -> Tensor:
    ctx, squeeze = prepare_context(m, context, Arch.DLINEAR)
    trend, rem = dlinear_decompose(ctx, m.config.ma_kernel)
    p = m.params
    out = add(
        linear(Tensor(trend), p["trend.weight"], p["trend.bias"]),
        linear(Tensor(rem), p["seasonal.weight"], p["seasonal.bias"]),
    )
    return out[0] if squeeze else out
