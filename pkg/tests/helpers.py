"""Shared fixtures-by-function for the test modules."""
from __future__ import annotations

import numpy as np

from tsir.autodiff import finite_diff_check, mae_loss, no_grad, track_kinks
from tsir.models import Arch, ModelConfig, forward, init_params

GRAD_L = GRAD_H = 16
GRAD_HIDDEN = 8
GRAD_WINDOWS = 3
# finite differences step by 1e-4; stay a decade clear of every relu/pool kink
KINK_MARGIN = 1e-3


def small_config(arch: Arch, seed: int = 0) -> ModelConfig:
    """Reduced-size model (L=H=16, hidden 8) with at most 2000 parameters."""
    kw = dict(arch=arch, input_size=GRAD_L, horizon=GRAD_H, hidden_size=GRAD_HIDDEN, seed=seed)
    if arch is Arch.DLINEAR:
        kw.update(ma_kernel=5)
    elif arch is Arch.NHITS:
        kw.update(pool_kernels=(4, 2, 1), interp_factors=(4, 2, 1))
    elif arch is Arch.PATCHTST:
        kw.update(patch_length=4, n_heads=2, ff_dim=8)
    return ModelConfig(**kw)


def gradient_case(arch: Arch, seed: int, max_draws: int = 200):
    """Model, context and target at which the full MAE loss is differentiable.

    Contexts are redrawn until every non-smooth op sits at least
    ``KINK_MARGIN`` from its kink. Targets are offset from the prediction by
    at least 0.5 with one residual sign per draw, so the absolute value in the
    loss is never near zero and its sign pattern cannot cancel exactly.
    """
    model = init_params(small_config(arch, seed))
    for draw in range(max_draws):
        rng = np.random.default_rng([seed, draw])
        ctx = rng.normal(size=(GRAD_WINDOWS, GRAD_L))
        with no_grad(), track_kinks() as margins:
            pred = forward(model, ctx).data
        if min(margins, default=np.inf) > KINK_MARGIN:
            sign = -1.0 if seed % 2 else 1.0
            target = pred - sign * (0.5 + rng.random(pred.shape))
            return model, ctx, target
    raise RuntimeError(f"no kink-free draw for {arch.value} seed {seed}")


def model_gradient_error(arch: Arch, seed: int) -> float:
    model, ctx, target = gradient_case(arch, seed)
    return finite_diff_check(lambda p: mae_loss(forward(model, ctx), target), model.params, h=1e-4)
