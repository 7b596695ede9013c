"""
Tensor core: dense arrays with reverse-mode automatic differentiation.
"""

from tensor.tensor import (
    DEFAULT_DTYPE,
    Tensor,
    as_tensor,
    is_grad_enabled,
    no_grad,
    track_allocations,
)
from tensor.functional import (
    ELEMENTWISE_OPS,
    assert_finite,
    avg_pool2d,
    concat,
    conv2d,
    cosine_similarity,
    dump_csv,
    elementwise,
    gram,
    l2_norm,
    l2_normalize,
    layer_norm,
    load_csv,
    log_softmax,
    matmul,
    reduce,
    softmax,
    stack,
    standardize,
    upsample_nearest,
)
from tensor.random import RngStream
from tensor.scan import HAS_NUMBA, linear_recurrence

__all__ = [
    "DEFAULT_DTYPE",
    "ELEMENTWISE_OPS",
    "HAS_NUMBA",
    "RngStream",
    "Tensor",
    "as_tensor",
    "assert_finite",
    "avg_pool2d",
    "concat",
    "conv2d",
    "cosine_similarity",
    "dump_csv",
    "elementwise",
    "gram",
    "is_grad_enabled",
    "l2_norm",
    "l2_normalize",
    "layer_norm",
    "linear_recurrence",
    "load_csv",
    "log_softmax",
    "matmul",
    "no_grad",
    "reduce",
    "softmax",
    "stack",
    "standardize",
    "track_allocations",
    "upsample_nearest",
]
