from .tensor import (
    AutodiffError,
    GradHandle,
    GradientMap,
    Tape,
    TapeNode,
    Tensor,
    add,
    backward,
    conv3d,
    dot,
    elementwise,
    l2_norm,
    matmul,
    mean,
    mul,
    ones,
    reciprocal,
    reduce,
    relu,
    reshape,
    scale,
    softmax_cross_entropy,
    sub,
    sum_,
    tensor,
    zeros,
)
from .gradcheck import finite_diff_grad, relative_error

__all__ = [
    'AutodiffError', 'GradHandle', 'GradientMap', 'Tape', 'TapeNode', 'Tensor',
    'add', 'backward', 'conv3d', 'dot', 'elementwise', 'l2_norm', 'matmul', 'mean',
    'mul', 'ones', 'reciprocal', 'reduce', 'relu', 'reshape', 'scale',
    'softmax_cross_entropy', 'sub', 'sum_', 'tensor', 'zeros',
    'finite_diff_grad', 'relative_error',
]
