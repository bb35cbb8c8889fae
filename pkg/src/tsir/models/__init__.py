from .base import (
    ARCH_ORDER,
    ARCH_SLUGS,
    PATCH_GRID,
    Arch,
    ModelConfig,
    ModelInstance,
    init_params,
    param_layout,
)
from .dlinear import dlinear_decompose, dlinear_forward
from .mlp import mlp_forward
from .nhits import interp_matrix, nhits_components, nhits_forward
from .patchtst import patchtst_forward, patchtst_patch

_FORWARD = {
    Arch.MLP: mlp_forward,
    Arch.DLINEAR: dlinear_forward,
    Arch.NHITS: nhits_forward,
    Arch.PATCHTST: patchtst_forward,
}


def forward(m: ModelInstance, context):
    """Dispatch to the architecture's forward pass."""
    return _FORWARD[m.config.arch](m, context)
