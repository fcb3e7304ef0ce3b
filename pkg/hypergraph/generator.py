import dataclasses
import logging

import numpy as np
from sklearn.linear_model import LogisticRegression

from .dataset import Dataset, TASK_HYPEREDGE, TASK_HYPERGRAPH, TASK_NODE, TASKS
from .structure import build_hypergraph

logger = logging.getLogger("PlantedGenerator")

LABEL_FACTOR = 0


class DegenerateSpec(ValueError):
    """Raised when a synthetic spec cannot produce a dataset."""


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    num_nodes: int = 200
    num_hyperedges: int = 80
    num_factors: int = 2
    mean_degree: float = 6.0
    feature_dim: int = 16
    noise_std: float = 0.1
    context_strength: float = 1.0
    private_std: float = 1.0
    num_clusters: int = 6
    num_classes: int = 3
    task: str = TASK_NODE
    num_samples: int = 200
    seed: int = 0

    @classmethod
    def from_dict(cls, config):
        """
        Build a spec from the 'synthetic' configuration section.

        Args:
            config (dict): Section with the SyntheticSpec field names as keys
        """
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(config) - fields
        if unknown:
            logger.warning(f"Ignoring unknown synthetic settings: {sorted(unknown)}")
        return cls(**{k: v for k, v in config.items() if k in fields})

    def validate(self):
        if self.num_factors < 1:
            raise DegenerateSpec("need at least one planted factor")
        if self.mean_degree < 2:
            raise DegenerateSpec(f"mean hyperedge degree must be at least 2, got {self.mean_degree}")
        if self.noise_std < 0 or self.private_std < 0 or self.context_strength < 0:
            raise DegenerateSpec("noise std, private std and context strength must be non-negative")
        if self.num_nodes < 2:
            raise DegenerateSpec("need at least two nodes for degree-2 hyperedges")
        if self.num_clusters < 1:
            raise DegenerateSpec("need at least one cluster per factor")
        if self.num_hyperedges < 0 or self.num_classes < 2:
            raise DegenerateSpec("need a non-negative hyperedge count and at least two classes")
        if self.feature_dim % self.num_factors:
            raise DegenerateSpec(f"feature dim {self.feature_dim} not divisible by {self.num_factors} factors")
        if self.task not in TASKS:
            raise DegenerateSpec(f"unknown task {self.task!r}")
        if self.task == TASK_HYPERGRAPH and self.num_samples < 1:
            raise DegenerateSpec("hypergraph task needs at least one sample")
        if self.task == TASK_HYPEREDGE and self.num_factors < 2:
            raise DegenerateSpec("hyperedge task labels hyperedges by planted type and needs at least two factors")


def _sample_topology(spec, rng):
    """
    Planted types, per-factor node clusters and hyperedge members.

    Every node falls in one of num_clusters clusters per factor. A type-t
    hyperedge draws its members from a single cluster of factor t (the
    cluster of a random anchor node). Sizes are truncated geometric with
    minimum 2, capped by the cluster size; a cluster with fewer than two
    nodes falls back to the whole node set.

    Returns:
        tuple: (types (M,), clusters (N×K), Hypergraph)
    """
    N, M, K = spec.num_nodes, spec.num_hyperedges, spec.num_factors
    types = rng.integers(0, K, size=M)
    clusters = rng.integers(0, spec.num_clusters, size=(N, K))
    p = 1.0 / (spec.mean_degree - 1.0)
    sizes = 1 + rng.geometric(p, size=M)
    anchors = rng.integers(0, N, size=M)
    pairs = []
    for edge in range(M):
        t = types[edge]
        pool = np.flatnonzero(clusters[:, t] == clusters[anchors[edge], t])
        if pool.size < 2:
            pool = np.arange(N)
        members = np.sort(rng.choice(pool, size=min(int(sizes[edge]), pool.size), replace=False))
        pairs.extend((int(v), edge) for v in members)
    return types, clusters, build_hypergraph(pairs, N, M)


def _plant_latent(clusters, spec, block, rng):
    """
    Latent blocks: block t of a node is its factor-t cluster center plus
    private noise, so members of a type-t hyperedge agree in block t only.

    Returns:
        numpy.ndarray: N×K×b latent blocks
    """
    num_nodes, num_factors = clusters.shape
    centers = spec.context_strength * rng.standard_normal((num_factors, spec.num_clusters, block))
    latent = spec.private_std * rng.standard_normal((num_nodes, num_factors, block))
    return latent + centers[np.arange(num_factors)[None, :], clusters]


def _label_signal(blocks, hg, types, label_factor):
    """
    Per-node signal: mean over incident label-factor hyperedges of the
    hyperedge's member-average of its own factor block; nodes without such
    hyperedges fall back to their own label-factor block.

    Args:
        blocks (numpy.ndarray): N×K×b block features
    """
    edge_reps = np.zeros((hg.num_hyperedges, blocks.shape[2]))
    for t in np.unique(types):
        chosen = types == t
        edge_reps[chosen] = (hg.edge_map.mean_matrix @ blocks[:, t, :])[chosen]
    relevant = (types == label_factor).astype(float)
    counts = hg.node_map.matrix @ relevant
    sums = hg.node_map.matrix @ (edge_reps * relevant[:, None])
    signal = blocks[:, label_factor, :].copy()
    has = counts > 0
    signal[has] = sums[has] / counts[has, None]
    return signal


def _sample_signal(blocks, hg, types, label_factor):
    """Per-sample signal: mean over label-factor hyperedges of their member-averaged block."""
    chosen = types == label_factor
    if not chosen.any():
        return blocks[:, label_factor, :].mean(axis=0)
    edge_reps = hg.edge_map.mean_matrix @ blocks[:, label_factor, :]
    return edge_reps[chosen].mean(axis=0)


def _dispersion_features(blocks, hg):
    """Per hyperedge and block: log of the mean member variance around the hyperedge mean."""
    num_nodes, num_factors, block = blocks.shape
    flat = blocks.reshape(num_nodes, num_factors * block)
    mean = hg.edge_map.mean_matrix @ flat
    mean_sq = hg.edge_map.mean_matrix @ (flat * flat)
    var = np.maximum(mean_sq - mean * mean, 0.0).reshape(hg.num_hyperedges, num_factors, block).mean(axis=2)
    return np.log(var + 1e-6)


def _argmax_labels(signal, readout):
    scores = signal @ readout
    return np.argmax(scores - scores.mean(axis=0), axis=1)


def generate_planted(spec):
    """
    Generate a dataset whose hyperedges carry planted factor types.

    Each node holds one latent block per factor. Members of a type-t
    hyperedge come from one factor-t cluster and share its center in block
    t. Only hyperedges of the label factor (factor 0) determine node and
    sample labels; the others are distractors. The hyperedge task labels
    every hyperedge with its planted type.

    Args:
        spec (SyntheticSpec): Generation settings

    Returns:
        Dataset: Unsplit dataset with planted_factors populated
    """
    spec.validate()
    topo_ss, latent_ss, noise_ss, readout_ss = np.random.SeedSequence(spec.seed).spawn(4)
    topo_rng = np.random.default_rng(topo_ss)
    latent_rng = np.random.default_rng(latent_ss)
    noise_rng = np.random.default_rng(noise_ss)
    readout_rng = np.random.default_rng(readout_ss)

    types, clusters, hg = _sample_topology(spec, topo_rng)
    K, N, d0 = spec.num_factors, spec.num_nodes, spec.feature_dim
    block = d0 // K
    readout = readout_rng.standard_normal((block, spec.num_classes))
    num_classes = spec.num_classes

    if spec.task == TASK_HYPERGRAPH:
        S = spec.num_samples
        latent = np.stack([_plant_latent(clusters, spec, block, latent_rng) for _ in range(S)])
        features = latent.reshape(S, N, d0) + noise_rng.normal(0.0, spec.noise_std, (S, N, d0))
        signal = np.stack([_sample_signal(latent[s], hg, types, LABEL_FACTOR) for s in range(S)])
        labels = _argmax_labels(signal, readout)
    else:
        latent = _plant_latent(clusters, spec, block, latent_rng)
        features = latent.reshape(N, d0) + noise_rng.normal(0.0, spec.noise_std, (N, d0))
        if spec.task == TASK_HYPEREDGE:
            labels, num_classes = types, K
        else:
            labels = _argmax_labels(_label_signal(latent, hg, types, LABEL_FACTOR), readout)

    dataset = Dataset(
        task=spec.task,
        hypergraph=hg,
        features=features,
        labels=labels,
        num_classes=num_classes,
        planted_factors=types,
        num_planted_factors=K,
        label_factor=LABEL_FACTOR,
    )
    logger.info(f"Generated planted {spec.task} dataset: N={N}, M={spec.num_hyperedges}, "
                f"E={hg.num_incidences}, K*={K}, class counts {np.bincount(labels, minlength=num_classes).tolist()}")
    return dataset


def oracle_features(dataset):
    """
    Features for the learnability oracle.

    Node and hypergraph tasks: the label-factor signal recomputed from the
    observed features and the planted ids. Hyperedge task: per-block member
    dispersion, which reveals the planted type without being told it.
    """
    if not dataset.has_planted:
        raise ValueError("oracle needs planted factor ids")
    K = max(dataset.num_planted_factors, 1)
    block = dataset.feature_dim // K
    hg, types = dataset.hypergraph, dataset.planted_factors
    if dataset.task == TASK_HYPERGRAPH:
        blocks = dataset.features.astype(np.float64).reshape(dataset.num_samples, dataset.num_nodes, K, block)
        return np.stack([_sample_signal(b, hg, types, dataset.label_factor) for b in blocks])
    blocks = dataset.features.astype(np.float64).reshape(dataset.num_nodes, K, block)
    if dataset.task == TASK_HYPEREDGE:
        return _dispersion_features(blocks, hg)
    return _label_signal(blocks, hg, types, dataset.label_factor)


def planted_factor_oracle(dataset, seed=0, test_fraction=0.25):
    """
    Accuracy of a classifier fit on the oracle features.

    A logistic regression is fit on a random (1 - test_fraction) share of
    the population and scored on the rest.

    Returns:
        float: Held-out accuracy
    """
    signal = oracle_features(dataset)
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.population)
    cut = int(round((1.0 - test_fraction) * order.size))
    train, test = order[:cut], order[cut:]
    clf = LogisticRegression(C=100.0, max_iter=2000)
    clf.fit(signal[train], dataset.labels[train])
    accuracy = float(np.mean(clf.predict(signal[test]) == dataset.labels[test]))
    logger.info(f"Planted-factor oracle accuracy: {accuracy:.3f}")
    return accuracy
