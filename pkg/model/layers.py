import logging
from dataclasses import dataclass

import numpy as np

from autodiff import tensor as T
from autodiff.segments import segment_mean, segment_sum

logger = logging.getLogger("NaturalHNN")

ACTIVATIONS = ("tanh", "linear")


@dataclass
class FactorEncoderParams:
    """One linear map + activation whose output columns split into K factor chunks."""
    weight: T.Tensor
    bias: T.Tensor
    num_factors: int
    activation: str = "tanh"

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def block(self, k):
        """Column block k as an independent encoder of width d/K."""
        width = self.out_dim // self.num_factors
        cols = slice(k * width, (k + 1) * width)
        return FactorEncoderParams(T.Tensor(self.weight.data[:, cols], dtype=self.weight.dtype),
                                   T.Tensor(self.bias.data[cols], dtype=self.bias.dtype), 1, self.activation)


@dataclass
class BilinearScorerParams:
    """One (d/K)×(d/K) matrix per factor, no bias."""
    weights: list


@dataclass
class LayerParams:
    encoder: FactorEncoderParams
    scorer: BilinearScorerParams
    ln_gamma: T.Tensor
    ln_beta: T.Tensor


@dataclass
class LayerOutput:
    """Everything one layer exposes to the losses and the analysis code."""
    z: T.Tensor
    alpha: T.Tensor
    node_factors: T.Tensor
    hyperedge_factors: T.Tensor
    hyperedge_factors_tilde: T.Tensor
    hyperedge_reps: T.Tensor


def init_encoder(d_in, d, num_factors, rng, dtype, activation="tanh"):
    """Uniform ±sqrt(6/(d_in+d)) weights, zero bias."""
    if d % num_factors:
        raise T.ShapeMismatch(f"hidden size {d} not divisible by {num_factors} factors")
    limit = np.sqrt(6.0 / (d_in + d))
    weight = T.Tensor(rng.uniform(-limit, limit, (d_in, d)), requires_grad=True, dtype=dtype)
    bias = T.Tensor(np.zeros(d), requires_grad=True, dtype=dtype)
    return FactorEncoderParams(weight, bias, num_factors, activation)


def init_scorer(d, num_factors, rng, dtype):
    """Identity plus N(0, 0.01) noise for every factor matrix."""
    width = d // num_factors
    weights = [T.Tensor(np.eye(width) + rng.normal(0.0, 0.01, (width, width)), requires_grad=True, dtype=dtype)
               for _ in range(num_factors)]
    return BilinearScorerParams(weights)


def init_layer(d_in, d, num_factors, rng, dtype, activation="tanh"):
    encoder = init_encoder(d_in, d, num_factors, rng, dtype, activation)
    scorer = init_scorer(d, num_factors, rng, dtype)
    gamma = T.Tensor(np.ones(d), requires_grad=True, dtype=dtype)
    beta = T.Tensor(np.zeros(d), requires_grad=True, dtype=dtype)
    return LayerParams(encoder, scorer, gamma, beta)


def factor_encode(x, enc):
    """
    Apply the factor encoder; chunk k of the result is factor k.

    Args:
        x (Tensor): N×d_in inputs
        enc (FactorEncoderParams): Encoder

    Returns:
        Tensor: N×d encoded rows
    """
    if x.ndim != 2 or x.shape[1] != enc.weight.shape[0]:
        raise T.ShapeMismatch(f"encoder expects {enc.weight.shape[0]} input columns, got {x.shape}")
    pre = T.add(T.matmul(x, enc.weight), enc.bias)
    if enc.activation == "linear":
        return pre
    return T.tanh(pre)


def _mask_empty(h, hg):
    """Zero the rows of hyperedges that have no members."""
    if not hg.empty_hyperedges.any():
        return h
    keep = T.constant((~hg.empty_hyperedges).astype(h.dtype), dtype=h.dtype)
    return T.row_scale(h, keep)


def aggregation_first_branch(x, hg, enc):
    """Mean over hyperedge members, then the factor encoder (H̃)."""
    return _mask_empty(factor_encode(segment_mean(x, hg.edge_map), enc), hg)


def disentangle_first_branch(x, hg, enc, encoded=None):
    """
    Factor encoder on every node, then mean over hyperedge members (H).

    Args:
        encoded (Tensor): Already encoded node rows, reused when given
    """
    if encoded is None:
        encoded = factor_encode(x, enc)
    return segment_mean(encoded, hg.edge_map)


def relevance_scores(h, h_tilde, scorer, eps=1e-12):
    """
    α[i, k] = σ( ĥ_i^k W_k (ĥ̃_i^k)ᵀ ) with both chunks L2-normalised.

    Args:
        h (Tensor): M×d disentangle-first hyperedge factors
        h_tilde (Tensor): M×d aggregation-first hyperedge factors
        scorer (BilinearScorerParams): One matrix per factor

    Returns:
        Tensor: M×K relevance scores in (0, 1)
    """
    num_factors = len(scorer.weights)
    scores = []
    for chunk, chunk_tilde, w in zip(T.chunk_cols(h, num_factors), T.chunk_cols(h_tilde, num_factors),
                                     scorer.weights):
        left = T.l2_normalize_rows(chunk, eps)
        right = T.l2_normalize_rows(chunk_tilde, eps)
        scores.append(T.row_sum(T.mul_elementwise(T.matmul(left, w), right)))
    return T.sigmoid(T.stack_cols(scores))


def weighted_hyperedge_reps(h, alpha):
    """Scale factor chunk k of hyperedge i by α[i, k]."""
    num_factors = alpha.shape[1]
    chunks = T.chunk_cols(h, num_factors)
    return T.concat_cols([T.row_scale(c, T.column(alpha, k)) for k, c in enumerate(chunks)])


def hyperedge_to_node(hw, alpha, hg, eps=1e-12):
    """
    y_v^k = Σ_{e∋v} α_e^k h_e^k / max(Σ_{e∋v} α_e^k, eps).

    Args:
        hw (Tensor): M×d α-weighted hyperedge factors
        alpha (Tensor): M×K relevance scores
        hg (Hypergraph): Incidence structure

    Returns:
        Tensor: N×d node factors; nodes without hyperedges get zero rows
    """
    num_factors = alpha.shape[1]
    numerators = T.chunk_cols(segment_sum(hw, hg.node_map), num_factors)
    totals = segment_sum(alpha, hg.node_map)
    parts = []
    for k, numerator in enumerate(numerators):
        inv = T.reciprocal(T.clamp_min(T.column(totals, k), eps))
        parts.append(T.row_scale(numerator, inv))
    return T.concat_cols(parts)


def layer_forward(x, hg, layer, cfg, rng=None, training=False, alpha_override=None):
    """
    One Natural-HNN layer.

    Args:
        x (Tensor): N×d_in node inputs
        hg (Hypergraph): Incidence structure
        layer (LayerParams): Layer parameters
        cfg (ModelConfig): Variant, β, dropout and guard constants
        rng (numpy.random.Generator): Dropout source (training only)
        training (bool): Enables dropout
        alpha_override (float): Replace every relevance score by this constant

    Returns:
        LayerOutput: Node outputs z (N×d), α (M×K) and the factor tensors
    """
    x = T.dropout(x, cfg.dropout, rng, training)
    encoded = factor_encode(x, layer.encoder)
    h = disentangle_first_branch(x, hg, layer.encoder, encoded=encoded)
    h_tilde = aggregation_first_branch(x, hg, layer.encoder)

    if cfg.variant == "ablation" and alpha_override is None:
        alpha_override = 1.0
    if alpha_override is not None:
        alpha = T.constant(np.full((hg.num_hyperedges, cfg.num_factors), alpha_override), dtype=x.dtype)
    else:
        alpha = relevance_scores(h, h_tilde, layer.scorer, cfg.norm_eps)

    selected = h_tilde if cfg.variant == "alt-branch" else h
    hw = weighted_hyperedge_reps(selected, alpha)
    y = hyperedge_to_node(hw, alpha, hg, cfg.agg_eps)
    mixed = T.add(T.scale(y, cfg.beta), T.scale(encoded, 1.0 - cfg.beta))
    z = T.layer_norm(mixed, layer.ln_gamma, layer.ln_beta, cfg.ln_eps)
    return LayerOutput(z, alpha, encoded, h, h_tilde, hw)
