"""Minimal numeric stack for the sequence models.

Reverse-mode differentiation over a fixed set of float64 numpy kernels, an
Adam optimizer, a finite-difference gradient checker, and a flat binary
checkpoint format. The finite-difference path never touches the autodiff
backward machinery, so the two gradient routes stay independent.
"""

from .autodiff import (
    Tensor,
    add,
    causal_softmax,
    concat_cols,
    concat_rows,
    constant,
    cross_entropy_mean,
    layer_norm,
    matmul,
    mul,
    parameter,
    relu,
    scale,
    sigmoid,
    slice_cols,
    softmax_rows,
    take_rows,
    tanh,
    transpose,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .kernels import (
    cross_entropy,
    positional_encoding,
    positional_encoding_matrix,
    softmax,
)
from .optim import AdamConfig, AdamState, adam_step

__all__ = [
    "AdamConfig",
    "AdamState",
    "Tensor",
    "adam_step",
    "add",
    "causal_softmax",
    "concat_cols",
    "concat_rows",
    "constant",
    "cross_entropy",
    "cross_entropy_mean",
    "grad_check",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "mul",
    "parameter",
    "positional_encoding",
    "positional_encoding_matrix",
    "relu",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "slice_cols",
    "softmax",
    "softmax_rows",
    "take_rows",
    "tanh",
    "transpose",
]
