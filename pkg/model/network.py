import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from autodiff import tensor as T
from autodiff.segments import segment_mean
from hypergraph.dataset import TASK_HYPEREDGE, TASK_HYPERGRAPH
from .baseline import HGNNLayerParams, hgnn_layer_forward, init_hgnn_layer
from .layers import (
    ACTIVATIONS, BilinearScorerParams, FactorEncoderParams, LayerParams, init_layer, layer_forward
)

logger = logging.getLogger("NaturalHNN")

VARIANTS = ("full", "ablation", "alt-branch", "hgnn")
VARIANT_ALIASES = {"ablation-no-naturality": "ablation", "alt": "alt-branch"}


class ModelConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    num_layers: int = 2
    num_factors: int = 4
    hidden: int = 64
    beta: float = 0.5
    variant: str = "full"
    dropout: float = 0.5
    dis_weight: float = 0.0
    activation: str = "tanh"
    norm_eps: float = 1e-12
    ln_eps: float = 1e-5
    agg_eps: float = 1e-12

    def __post_init__(self):
        self.variant = VARIANT_ALIASES.get(self.variant, self.variant)
        self.validate()

    @classmethod
    def from_dict(cls, config):
        """
        Build a model config from the 'model' settings section.

        Args:
            config (dict): Section dictionary
        """
        return cls(
            num_layers=int(config.get('num_layers', 2)),
            num_factors=int(config.get('num_factors', 4)),
            hidden=int(config.get('hidden', 64)),
            beta=float(config.get('beta', 0.5)),
            variant=config.get('variant', 'full'),
            dropout=float(config.get('dropout', 0.5)),
            dis_weight=float(config.get('dis_weight', 0.0)),
            activation=config.get('activation', 'tanh'),
            norm_eps=float(config.get('norm_eps', 1e-12)),
            ln_eps=float(config.get('ln_eps', 1e-5)),
            agg_eps=float(config.get('agg_eps', 1e-12)),
        )

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ModelConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.num_layers < 1 or self.num_factors < 1 or self.hidden < 1:
            raise ModelConfigError("layers, factors and hidden size must be positive")
        if self.hidden % self.num_factors:
            raise ModelConfigError(f"hidden size {self.hidden} not divisible by {self.num_factors} factors")
        if not 0.0 <= self.beta <= 1.0:
            raise ModelConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.dis_weight < 0:
            raise ModelConfigError("dis_weight must be non-negative")
        if self.activation not in ACTIVATIONS:
            raise ModelConfigError(f"activation must be one of {ACTIVATIONS}")

    @property
    def uses_factors(self):
        return self.variant != "hgnn"


@dataclass
class ModelParams:
    """All learnable tensors of one model instance."""
    task: str
    input_dim: int
    num_classes: int
    num_hyperedges: int
    layers: list
    classifier_weight: T.Tensor
    classifier_bias: T.Tensor
    factor_classifiers: list = field(default_factory=list)

    def named_parameters(self):
        """Ordered name -> Tensor mapping (stable across save/load)."""
        named = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, LayerParams):
                named[f"layer{i}.encoder.weight"] = layer.encoder.weight
                named[f"layer{i}.encoder.bias"] = layer.encoder.bias
                for k, w in enumerate(layer.scorer.weights):
                    named[f"layer{i}.scorer.{k}"] = w
                named[f"layer{i}.ln.gamma"] = layer.ln_gamma
                named[f"layer{i}.ln.beta"] = layer.ln_beta
            else:
                named[f"layer{i}.hgnn.weight"] = layer.weight
                named[f"layer{i}.hgnn.bias"] = layer.bias
        named["classifier.weight"] = self.classifier_weight
        named["classifier.bias"] = self.classifier_bias
        for i, (w, b) in enumerate(self.factor_classifiers):
            named[f"factor_classifier{i}.weight"] = w
            named[f"factor_classifier{i}.bias"] = b
        return named

    def bind(self, tensors):
        """
        Copy of the structure holding the given tensors instead.

        Args:
            tensors (list): Tensors in named_parameters() order

        Returns:
            ModelParams: Same layout, new leaves
        """
        it = iter(tensors)
        layers = []
        for layer in self.layers:
            if isinstance(layer, LayerParams):
                enc = layer.encoder
                encoder = FactorEncoderParams(next(it), next(it), enc.num_factors, enc.activation)
                scorer = BilinearScorerParams([next(it) for _ in layer.scorer.weights])
                layers.append(LayerParams(encoder, scorer, next(it), next(it)))
            else:
                layers.append(HGNNLayerParams(next(it), next(it)))
        weight, bias = next(it), next(it)
        factor_classifiers = [(next(it), next(it)) for _ in self.factor_classifiers]
        return ModelParams(self.task, self.input_dim, self.num_classes, self.num_hyperedges, layers,
                           weight, bias, factor_classifiers)

    def snapshot(self):
        """Copy of every parameter array, keyed by name."""
        return {name: t.data.copy() for name, t in self.named_parameters().items()}

    def restore(self, snapshot):
        for name, t in self.named_parameters().items():
            t.data = snapshot[name].copy()

    @property
    def dtype(self):
        return self.classifier_weight.dtype


@dataclass
class ModelOutput:
    logits: T.Tensor
    layers: list
    final_hyperedge_reps: T.Tensor

    @property
    def alphas(self):
        return [out.alpha for out in self.layers if hasattr(out, "alpha")]

    @property
    def factor_reps(self):
        return [out.hyperedge_factors for out in self.layers if hasattr(out, "hyperedge_factors")]


@dataclass
class HGNNLayerOutput:
    z: T.Tensor


def _linear(d_in, d_out, rng, dtype):
    limit = np.sqrt(6.0 / (d_in + d_out))
    return (T.Tensor(rng.uniform(-limit, limit, (d_in, d_out)), requires_grad=True, dtype=dtype),
            T.Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype))


def init_params(cfg, input_dim, num_classes, num_hyperedges, task, rng, dtype=None):
    """
    Initialise a model.

    Args:
        cfg (ModelConfig): Architecture
        input_dim (int): Feature dimension d0
        num_classes (int): Output classes C
        num_hyperedges (int): M, sizes the hypergraph-task readout
        task (str): 'node', 'hypergraph' or 'hyperedge'
        rng (numpy.random.Generator): Initialisation stream
        dtype: Tensor precision (default NHNN_DTYPE)

    Returns:
        ModelParams: Fresh parameters
    """
    dtype = T.resolve_dtype(dtype)
    layers = []
    d_in = input_dim
    for _ in range(cfg.num_layers):
        if cfg.uses_factors:
            layers.append(init_layer(d_in, cfg.hidden, cfg.num_factors, rng, dtype, cfg.activation))
        else:
            layers.append(init_hgnn_layer(d_in, cfg.hidden, rng, dtype))
        d_in = cfg.hidden

    readout_dim = num_hyperedges * cfg.hidden if task == TASK_HYPERGRAPH else cfg.hidden
    weight, bias = _linear(readout_dim, num_classes, rng, dtype)

    factor_classifiers = []
    if cfg.uses_factors and cfg.dis_weight > 0:
        width = cfg.hidden // cfg.num_factors
        factor_classifiers = [_linear(width, cfg.num_factors, rng, dtype) for _ in range(cfg.num_layers)]
    elif cfg.dis_weight > 0:
        logger.warning("The HGNN baseline has no factors; dis_weight is ignored")

    params = ModelParams(task, input_dim, num_classes, num_hyperedges, layers, weight, bias, factor_classifiers)
    logger.info(f"Initialised {cfg.variant} model: {cfg.num_layers} layers, K={cfg.num_factors}, "
                f"d={cfg.hidden}, {sum(t.data.size for t in params.named_parameters().values())} parameters")
    return params


def readout_hyperedge_concat(hyperedge_reps, num_samples):
    """
    Concatenate each sample's hyperedge representations in hyperedge index order.

    Args:
        hyperedge_reps (Tensor): (S·M)×d rows, sample-major
        num_samples (int): S

    Returns:
        Tensor: S×(M·d)
    """
    rows, d = hyperedge_reps.shape
    return T.reshape(hyperedge_reps, (num_samples, (rows // max(num_samples, 1)) * d))


def mean_alpha_over_samples(alpha, num_samples):
    """Average an (S·M)×K relevance stack into an M×K matrix."""
    data = alpha.data if isinstance(alpha, T.Tensor) else np.asarray(alpha)
    return data.reshape(num_samples, -1, data.shape[1]).mean(axis=0)


def model_forward(features, hg, params, cfg, training=False, rng=None, alpha_override=None):
    """
    Run the model.

    Args:
        features: N×d0 (node and hyperedge tasks) or S×N×d0 (hypergraph task) array or Tensor
        hg (Hypergraph): Shared topology
        params (ModelParams): Parameters
        cfg (ModelConfig): Architecture
        training (bool): Enables dropout
        rng (numpy.random.Generator): Dropout stream
        alpha_override (float): Constant relevance score for every layer

    Returns:
        ModelOutput: Logits (one row per node, sample or hyperedge), per-layer
            outputs and the final hyperedge reps
    """
    data = features.data if isinstance(features, T.Tensor) else np.asarray(features)
    if params.task == TASK_HYPERGRAPH:
        if data.ndim != 3:
            raise T.ShapeMismatch(f"hypergraph task expects S×N×d0 features, got {data.shape}")
        num_samples = data.shape[0]
        graph = hg.tile(num_samples)
        data = data.reshape(num_samples * hg.num_nodes, data.shape[2])
    else:
        num_samples = 1
        graph = hg

    x = T.Tensor(data, dtype=params.dtype)
    outputs = []
    for layer in params.layers:
        if isinstance(layer, HGNNLayerParams):
            out = HGNNLayerOutput(hgnn_layer_forward(x, graph, layer, cfg, rng, training))
        else:
            out = layer_forward(x, graph, layer, cfg, rng, training, alpha_override)
        outputs.append(out)
        x = out.z

    if isinstance(outputs[-1], HGNNLayerOutput):
        final_edges = segment_mean(x, graph.edge_map)
    else:
        final_edges = outputs[-1].hyperedge_reps

    if params.task == TASK_HYPERGRAPH:
        readout = readout_hyperedge_concat(final_edges, num_samples)
    elif params.task == TASK_HYPEREDGE:
        readout = final_edges
    else:
        readout = x
    logits = T.add(T.matmul(readout, params.classifier_weight), params.classifier_bias)
    return ModelOutput(logits, outputs, final_edges)


def predict(logits):
    """Arg-max class per row; ties go to the lowest class index."""
    data = logits.data if isinstance(logits, T.Tensor) else np.asarray(logits)
    return np.argmax(data, axis=1)
