from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import finite_diff_check
from .optim import AdamState, adam_step
from .tensor import (
    Tape,
    Tensor,
    abs_,
    active_tape,
    add,
    add_bias,
    as_tensor,
    backward,
    concat,
    gelu,
    layer_norm,
    linear,
    mae_loss,
    matmul,
    max_pool1d,
    mean,
    mse_loss,
    mul,
    no_grad,
    recording,
    relu,
    reshape,
    slice_,
    softmax,
    square,
    sub,
    sum_,
    track_kinks,
    transpose,
)
