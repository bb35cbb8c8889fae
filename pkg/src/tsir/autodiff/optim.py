"""Bias-corrected Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "AdamState":
        return AdamState(dict(self.m), dict(self.v), self.step)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, Tensor], AdamState]:
    """One Adam update.

    Parameter arrays are replaced rather than written in place, so earlier
    references to ``param.data`` (e.g. best-so-far snapshots) stay valid.
    A parameter without an entry in ``grads`` is treated as having zero gradient.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and np.shape(g) != p.shape:
            raise InvalidArgument(f"gradient for {name} has shape {np.shape(g)}, expected {p.shape}")
        for acc in (state.m, state.v):
            if name in acc and acc[name].shape != p.shape:
                raise InvalidArgument(f"optimizer state for {name} does not match parameter shape")
    t = state.step + 1
    m_new, v_new, updated = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.shape)
        m = state.m.get(name, np.zeros(p.shape))
        v = state.v.get(name, np.zeros(p.shape))
        with np.errstate(over="ignore", invalid="ignore"):
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            m_new[name], v_new[name] = m, v
            updated[name] = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not (np.isfinite(v).all() and np.isfinite(updated[name]).all()):
            raise NumericError(f"adam: non-finite moment or update for '{name}'")
    # parameters change only once every update is known to be finite
    for name, p in params.items():
        p.data = updated[name]
    return params, AdamState(m_new, v_new, t)
