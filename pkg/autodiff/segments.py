import logging

import numpy as np
import scipy.sparse as sp

from .tensor import ShapeMismatch, _result, row_scale, take_rows

logger = logging.getLogger("Autodiff")


class SegmentMap:
    """
    Grouping of input rows into output segments, stored in CSR form.

    Segment s aggregates rows indices[offsets[s]:offsets[s+1]]. Empty segments
    are allowed and reported through ``empty``.
    """

    def __init__(self, offsets, indices, num_rows):
        """
        Initialize a segment map.

        Args:
            offsets (array-like): S+1 non-decreasing offsets into indices
            indices (array-like): Input row index for every segment entry
            num_rows (int): Number of input rows R
        """
        offsets = np.asarray(offsets, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if offsets.ndim != 1 or offsets.size < 1 or offsets[0] != 0 or offsets[-1] != indices.size:
            raise ValueError("segment offsets must start at 0 and end at the entry count")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("segment offsets must be non-decreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= num_rows):
            raise ValueError(f"segment row index out of range [0, {num_rows})")

        self.offsets = offsets
        self.indices = indices
        self.num_rows = int(num_rows)
        self.num_segments = offsets.size - 1
        self.sizes = np.diff(offsets)
        self.empty = self.sizes == 0
        for arr in (self.offsets, self.indices, self.sizes, self.empty):
            arr.setflags(write=False)

        ones = np.ones(indices.size)
        self.matrix = sp.csr_matrix((ones, indices, offsets), shape=(self.num_segments, self.num_rows))
        inv = np.zeros(self.num_segments)
        inv[~self.empty] = 1.0 / self.sizes[~self.empty]
        self.mean_matrix = sp.csr_matrix((np.repeat(inv, self.sizes), indices, offsets),
                                         shape=(self.num_segments, self.num_rows))

    @classmethod
    def from_lists(cls, groups, num_rows):
        """Build a map from one list of row indices per segment."""
        sizes = [len(g) for g in groups]
        offsets = np.concatenate([[0], np.cumsum(sizes, dtype=np.int64)])
        indices = np.concatenate([np.asarray(g, dtype=np.int64) for g in groups]) if groups else np.zeros(0, np.int64)
        return cls(offsets, indices, num_rows)

    def segment(self, s):
        return self.indices[self.offsets[s]:self.offsets[s + 1]]

    def tile(self, times):
        """Block-diagonal repetition: copy t maps segments and rows shifted by t."""
        nnz = self.indices.size
        offsets = np.concatenate([[0], (np.arange(times)[:, None] * nnz + self.offsets[1:][None, :]).ravel()])
        indices = (np.arange(times)[:, None] * self.num_rows + self.indices[None, :]).ravel()
        return SegmentMap(offsets, indices, self.num_rows * times)


def _apply(matrix, x):
    return np.asarray(matrix @ x).astype(x.dtype, copy=False)


def segment_sum(x, seg):
    """Sum of the mapped rows (or entries of a vector) per segment."""
    if x.shape[0] != seg.num_rows:
        raise ShapeMismatch(f"segment map expects {seg.num_rows} rows, got {x.shape[0]}")
    matrix = seg.matrix

    def grad(g):
        return (_apply(matrix.T, g),)

    return _result("segment_sum", _apply(matrix, x.data), (x,), grad)


def segment_mean(x, seg):
    """
    Mean of the mapped rows per segment.

    Empty segments produce zero rows; ``seg.empty`` flags them.
    """
    if x.shape[0] != seg.num_rows:
        raise ShapeMismatch(f"segment map expects {seg.num_rows} rows, got {x.shape[0]}")
    matrix = seg.mean_matrix

    def grad(g):
        return (_apply(matrix.T, g),)

    return _result("segment_mean", _apply(matrix, x.data), (x,), grad)


def segment_weighted_sum(x, w, seg):
    """
    Weighted segment sum.

    Args:
        x (Tensor): R×d rows
        w (Tensor): R weights
        seg (SegmentMap): Grouping of the R rows

    Returns:
        tuple: (S×d tensor of Σ w·x, S-vector of Σ w)
    """
    if w.ndim != 1 or w.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"weights {w.shape} do not match rows {x.shape}")
    return segment_sum(row_scale(x, w), seg), segment_sum(w, seg)


def broadcast_segments(y, seg):
    """Copy every segment row back onto the rows it aggregates (entry order)."""
    owner = np.repeat(np.arange(seg.num_segments), seg.sizes)
    return take_rows(y, owner)
