"""Central finite-difference gradient oracle."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..errors import InvalidArgument
from .tensor import Tensor, backward, no_grad, recording


def finite_diff_check(
    f: Callable,
    x: Tensor | Mapping[str, Tensor],
    h: float = 1e-4,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` maps ``x`` (a tensor, or a mapping of named tensors) to a scalar
    tensor. The relative error uses ``max(|analytic|, |numeric|, 1e-8)`` as
    denominator, so an exactly zero gradient on both sides scores 0.
    """
    if h <= 0:
        raise InvalidArgument(f"h must be > 0, got {h}")
    leaves = list(x.values()) if isinstance(x, Mapping) else [x]
    saved = [t.requires_grad for t in leaves]
    for t in leaves:
        # perturbations below write through a flat view, so storage must be contiguous
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    with recording():
        loss = f(x)
        if loss.size != 1:
            raise InvalidArgument(f"f must be scalar-valued, got shape {loss.shape}")
        # a loss that ignores x never reaches the tape
        grads = backward(loss) if loss.node is not None else {}
    analytic = [grads.get(t, np.zeros(t.shape)) for t in leaves]

    worst = 0.0
    with no_grad():
        for t, ga in zip(leaves, analytic):
            flat = t.data.reshape(-1)
            gflat = np.asarray(ga).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f(x).data)
                flat[i] = orig - h
                fm = float(f(x).data)
                flat[i] = orig
                num = (fp - fm) / (2.0 * h)
                a = float(gflat[i])
                denom = max(abs(a), abs(num), 1e-8)
                worst = max(worst, abs(a - num) / denom)
    for t, flag in zip(leaves, saved):
        t.requires_grad = flag
        t.grad = None
    return worst
