from dsvpr.numerics.container import decode_weights, encode_weights, load_weights, save_weights
from dsvpr.numerics.functional import (
    bucket_gather,
    bucket_scatter,
    conv2d,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax_rows,
    softmax_rows,
)
from dsvpr.numerics.gradcheck import GradReport, grad_check
from dsvpr.numerics.tensor import (
    Tensor,
    add,
    as_tensor,
    clamp_min,
    concat,
    div,
    exp,
    gelu,
    getitem,
    grad_enabled,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    reshape,
    sqrt,
    sub,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "GradReport",
    "Tensor",
    "add",
    "as_tensor",
    "bucket_gather",
    "bucket_scatter",
    "clamp_min",
    "concat",
    "conv2d",
    "decode_weights",
    "div",
    "encode_weights",
    "exp",
    "gelu",
    "getitem",
    "grad_check",
    "grad_enabled",
    "l2_normalize",
    "layer_norm",
    "linear",
    "load_weights",
    "log",
    "log_softmax_rows",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "power",
    "reshape",
    "save_weights",
    "softmax_rows",
    "sqrt",
    "sub",
    "tanh",
    "transpose",
    "tsum",
]
