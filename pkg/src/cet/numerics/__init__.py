"""Minimal dense-tensor engine: autodiff, layer primitives, Adam."""

from .gradcheck import finite_diff_check
from .losses import cross_entropy, mse
from .optim import Adam, AdamState, adam_step
from .params import ParamStore
from .tensor import (
    Tensor,
    add_constant,
    concat,
    exp,
    gelu,
    getitem,
    graph_ancestors,
    is_grad_enabled,
    layer_norm,
    linear,
    log,
    log_softmax,
    logsumexp,
    matmul,
    no_grad,
    relu,
    softmax,
    stack,
    tanh,
    tensor,
)

linear_forward = linear

__all__ = [
    "Adam", "AdamState", "ParamStore", "Tensor", "adam_step", "add_constant", "concat",
    "cross_entropy", "exp", "finite_diff_check", "gelu", "getitem", "graph_ancestors",
    "is_grad_enabled", "layer_norm", "linear", "linear_forward", "log", "log_softmax",
    "logsumexp", "matmul", "mse", "no_grad", "relu", "softmax", "stack", "tanh", "tensor",
]
