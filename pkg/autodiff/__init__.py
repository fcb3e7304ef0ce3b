# Reverse-mode tensor engine with segmented reductions over hypergraph incidence
from .tensor import (
    Tensor, Tape, ShapeMismatch, NonFiniteValue, backward, constant, resolve_dtype,
    matmul, add, sub, mul_elementwise, scale, sigmoid, tanh, reciprocal, clamp_min, row_scale, row_sum,
    sum_all, l2_normalize_rows, layer_norm, concat_cols, concat_rows, slice_cols, chunk_cols,
    column, stack_cols, take_rows, reshape, log_softmax, pick, cross_entropy, dropout
)
from .segments import SegmentMap, segment_sum, segment_mean, segment_weighted_sum, broadcast_segments
from .gradcheck import GradCheckResult, finite_difference_gradient, relative_error, check_function, check_primitives

__all__ = [
    'Tensor', 'Tape', 'ShapeMismatch', 'NonFiniteValue', 'backward', 'constant', 'resolve_dtype',
    'matmul', 'add', 'sub', 'mul_elementwise', 'scale', 'sigmoid', 'tanh', 'reciprocal',
    'clamp_min', 'row_scale', 'row_sum', 'sum_all', 'l2_normalize_rows', 'layer_norm',
    'concat_cols', 'concat_rows', 'slice_cols', 'chunk_cols', 'column', 'stack_cols', 'take_rows', 'reshape',
    'log_softmax', 'pick', 'cross_entropy', 'dropout',
    'SegmentMap', 'segment_sum', 'segment_mean', 'segment_weighted_sum', 'broadcast_segments',
    'GradCheckResult', 'finite_difference_gradient', 'relative_error', 'check_function', 'check_primitives'
]
