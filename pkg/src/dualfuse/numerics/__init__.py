from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    conv1d,
    conv_transpose1d,
    matmul,
    mul,
    neg,
    no_grad,
    reciprocal,
    relu,
    reshape,
    sigmoid,
    softplus,
    sqrt,
    square,
    sub,
    take,
    tanh,
    texp,
    tlog,
    tmean,
    transpose,
    tsum,
)
from .functional import (
    cross_entropy,
    l2_norm,
    layer_norm,
    log_softmax,
    softmax,
    stack_rows,
)
from .module import Linear, Module, uniform_init
from .optim import Adam
from .checkpoint import MAGIC, load_checkpoint, save_checkpoint
from .fdcheck import gradcheck

__all__ = [
    "Adam",
    "Linear",
    "MAGIC",
    "Module",
    "ShapeError",
    "Tensor",
    "add",
    "concat",
    "conv1d",
    "conv_transpose1d",
    "cross_entropy",
    "gradcheck",
    "l2_norm",
    "layer_norm",
    "load_checkpoint",
    "log_softmax",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "reciprocal",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "softplus",
    "sqrt",
    "square",
    "stack_rows",
    "sub",
    "take",
    "tanh",
    "texp",
    "tlog",
    "tmean",
    "transpose",
    "tsum",
    "uniform_init",
]
