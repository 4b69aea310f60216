"""Minimal dense tensors, reverse-mode gradients, Adam and a portable RNG."""
from .gradcheck import GradCheckResult, grad_check, relative_error
from .optim import AdamState, adam_step
from .rng import Rng, fnv1a64
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    leaky_relu,
    log_softmax,
    matmul,
    max_rows,
    mean_rows,
    mul,
    relu,
    reshape,
    segment_softmax,
    segment_sum,
    sub,
    sum_all,
    take_rows,
    tanh,
)

__all__ = [
    "AdamState", "GradCheckResult", "Rng", "Tape", "Tensor", "active_tape", "adam_step",
    "add", "as_tensor", "backward", "concat", "cross_entropy", "fnv1a64", "grad_check",
    "leaky_relu", "log_softmax", "matmul", "max_rows", "mean_rows", "mul", "relative_error",
    "relu", "reshape", "segment_softmax", "segment_sum", "sub", "sum_all", "take_rows", "tanh",
]
