"""Stacked fully connected forecaster."""
from __future__ import annotations

from ..autodiff import Tensor, linear, relu
from .base import Arch, ModelInstance, prepare_context


def mlp_forward(m: ModelInstance, context) -> Tensor:
    ctx, squeeze = prepare_context(m, context, Arch.MLP)
    p = m.params
    h = Tensor(ctx)
    for i in range(m.config.n_layers):
        h = relu(linear(h, p[f"hidden{i}.weight"], p[f"hidden{i}.bias"]))
    out = linear(h, p["head.weight"], p["head.bias"])
    return out[0] if squeeze else out
