import logging
from dataclasses import dataclass

import numpy as np

from autodiff import tensor as T
from autodiff.segments import segment_mean, segment_weighted_sum

logger = logging.getLogger("HGNNBaseline")


@dataclass
class HGNNLayerParams:
    weight: T.Tensor
    bias: T.Tensor


def init_hgnn_layer(d_in, d, rng, dtype):
    limit = np.sqrt(6.0 / (d_in + d))
    return HGNNLayerParams(T.Tensor(rng.uniform(-limit, limit, (d_in, d)), requires_grad=True, dtype=dtype),
                           T.Tensor(np.zeros(d), requires_grad=True, dtype=dtype))


def _inv_sqrt_degree(hg, dtype):
    deg = hg.node_degrees.astype(np.float64)
    out = np.zeros_like(deg)
    out[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return T.constant(out, dtype=dtype)


def hgnn_baseline_layer(x, hg, weight):
    """
    Y = D_v^{-1/2} I D_e^{-1} Iᵀ D_v^{-1/2} X W, via two segment passes.

    Zero-degree nodes and empty hyperedges contribute and receive nothing.

    Args:
        x (Tensor): N×d_in node features
        hg (Hypergraph): Incidence structure
        weight (Tensor): d_in×d projection

    Returns:
        Tensor: N×d propagated features
    """
    dv = _inv_sqrt_degree(hg, x.dtype)
    projected = T.row_scale(T.matmul(x, weight), dv)
    edge_means = segment_mean(projected, hg.edge_map)
    ones = T.constant(np.ones(hg.num_hyperedges), dtype=x.dtype)
    gathered, _ = segment_weighted_sum(edge_means, ones, hg.node_map)
    return T.row_scale(gathered, dv)


def hgnn_layer_forward(x, hg, layer, cfg, rng=None, training=False):
    """Dropout, HGNN convolution, bias and tanh."""
    x = T.dropout(x, cfg.dropout, rng, training)
    return T.tanh(T.add(hgnn_baseline_layer(x, hg, layer.weight), layer.bias))
