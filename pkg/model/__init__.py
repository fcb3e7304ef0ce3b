# Natural-HNN model module: factor layers, full model, HGNN baseline and checkpoints
from .layers import (
    FactorEncoderParams, BilinearScorerParams, LayerParams, LayerOutput, init_encoder, init_scorer, init_layer,
    factor_encode, aggregation_first_branch, disentangle_first_branch, relevance_scores,
    weighted_hyperedge_reps, hyperedge_to_node, layer_forward
)
from .baseline import HGNNLayerParams, init_hgnn_layer, hgnn_baseline_layer, hgnn_layer_forward
from .network import (
    ModelConfig, ModelConfigError, ModelParams, ModelOutput, VARIANTS, init_params, model_forward,
    readout_hyperedge_concat, mean_alpha_over_samples, predict
)
from .checkpoint import PARAMS_MAGIC, save_params, load_params

__all__ = [
    'FactorEncoderParams', 'BilinearScorerParams', 'LayerParams', 'LayerOutput', 'init_encoder', 'init_scorer',
    'init_layer', 'factor_encode', 'aggregation_first_branch', 'disentangle_first_branch', 'relevance_scores',
    'weighted_hyperedge_reps', 'hyperedge_to_node', 'layer_forward',
    'HGNNLayerParams', 'init_hgnn_layer', 'hgnn_baseline_layer', 'hgnn_layer_forward',
    'ModelConfig', 'ModelConfigError', 'ModelParams', 'ModelOutput', 'VARIANTS', 'init_params', 'model_forward',
    'readout_hyperedge_concat', 'mean_alpha_over_samples', 'predict',
    'PARAMS_MAGIC', 'save_params', 'load_params'
]
