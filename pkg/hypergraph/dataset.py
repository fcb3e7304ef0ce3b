import dataclasses
import logging
import warnings

import numpy as np

from .container import MalformedFile, read_container, write_container
from .structure import build_hypergraph

logger = logging.getLogger("Dataset")

TASK_NODE = "node"
TASK_HYPERGRAPH = "hypergraph"
TASK_HYPEREDGE = "hyperedge"
TASKS = (TASK_NODE, TASK_HYPERGRAPH, TASK_HYPEREDGE)

DATASET_MAGIC = b"NHNN"


class EmptyClassAfterSplit(UserWarning):
    """A split is missing a class that occurs in the labeled population."""


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """
    Features, labels and splits over one shared hypergraph topology.

    Node task: features N×d0, one label per node.
    Hypergraph task: features S×N×d0, one label per sample.
    Hyperedge task: features N×d0, one label per hyperedge.
    """

    task: str
    hypergraph: object
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray = None
    val_mask: np.ndarray = None
    test_mask: np.ndarray = None
    planted_factors: np.ndarray = None
    num_planted_factors: int = 0
    label_factor: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        set_ = object.__setattr__
        set_(self, "features", _frozen(self.features, np.float32))
        set_(self, "labels", _frozen(self.labels, np.int64))
        n = self.labels.shape[0]
        for name in ("train_mask", "val_mask", "test_mask"):
            mask = getattr(self, name)
            set_(self, name, _frozen(np.zeros(n, bool) if mask is None else mask, bool))
        if self.planted_factors is not None:
            set_(self, "planted_factors", _frozen(self.planted_factors, np.int64))
        self.validate()

    @property
    def num_nodes(self):
        return self.hypergraph.num_nodes

    @property
    def num_hyperedges(self):
        return self.hypergraph.num_hyperedges

    @property
    def num_samples(self):
        return self.features.shape[0] if self.task == TASK_HYPERGRAPH else 0

    @property
    def feature_dim(self):
        return self.features.shape[-1]

    @property
    def population(self):
        """Number of labeled units (nodes, samples or hyperedges)."""
        return self.labels.shape[0]

    @property
    def has_planted(self):
        return self.planted_factors is not None

    @property
    def is_split(self):
        return bool(self.train_mask.any())

    def mask(self, split):
        """Boolean mask for 'train', 'val', 'test' or 'all'."""
        if split == "all":
            return np.ones(self.population, dtype=bool)
        return getattr(self, f"{split}_mask")

    def validate(self):
        """Check label, mask and planted-factor invariants."""
        hg = self.hypergraph
        if self.task in (TASK_NODE, TASK_HYPEREDGE):
            if self.features.ndim != 2 or self.features.shape[0] != hg.num_nodes:
                raise ValueError(f"{self.task} task features must be N×d0, got {self.features.shape}")
            expected = (hg.num_nodes,) if self.task == TASK_NODE else (hg.num_hyperedges,)
            if self.labels.shape != expected:
                raise ValueError(f"{self.task} task needs {expected[0]} labels, got {self.labels.shape}")
        else:
            if self.features.ndim != 3 or self.features.shape[1] != hg.num_nodes:
                raise ValueError(f"hypergraph task features must be S×N×d0, got {self.features.shape}")
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError(f"hypergraph task needs one label per sample, got {self.labels.shape}")

        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

        masks = [self.train_mask, self.val_mask, self.test_mask]
        for mask in masks:
            if mask.shape != self.labels.shape:
                raise ValueError("split masks must match the labeled population")
        if np.any(masks[0] & masks[1]) or np.any(masks[0] & masks[2]) or np.any(masks[1] & masks[2]):
            raise ValueError("split masks overlap")

        if self.planted_factors is not None:
            planted = self.planted_factors
            if planted.shape != (hg.num_hyperedges,):
                raise ValueError("planted factors need one id per hyperedge")
            if planted.size and (planted.min() < 0 or planted.max() >= max(self.num_planted_factors, 1)):
                raise ValueError(f"planted factor ids must lie in [0, {self.num_planted_factors})")

    def planted_incidence(self, factor):
        """Sub-incidence pairs of the hyperedges planted with the given factor."""
        if self.planted_factors is None:
            raise ValueError("dataset carries no planted factors")
        return self.hypergraph.sub_pairs(self.planted_factors == factor)

    def with_splits(self, train_mask, val_mask, test_mask):
        return dataclasses.replace(self, train_mask=train_mask, val_mask=val_mask, test_mask=test_mask)

    def permute(self, node_perm, edge_perm):
        """
        Relabel nodes and hyperedges consistently (old node v -> node_perm[v]).

        Returns:
            Dataset: Permuted copy
        """
        node_perm = np.asarray(node_perm)
        edge_perm = np.asarray(edge_perm)
        hg = self.hypergraph.permute(node_perm, edge_perm)
        features = np.empty_like(self.features)
        if self.task in (TASK_NODE, TASK_HYPEREDGE):
            features[node_perm] = self.features
            unit_perm = node_perm if self.task == TASK_NODE else edge_perm
            labels = np.empty_like(self.labels)
            labels[unit_perm] = self.labels
            masks = []
            for mask in (self.train_mask, self.val_mask, self.test_mask):
                moved = np.empty_like(mask)
                moved[unit_perm] = mask
                masks.append(moved)
        else:
            features[:, node_perm] = self.features
            labels = self.labels
            masks = [self.train_mask, self.val_mask, self.test_mask]
        planted = None
        if self.planted_factors is not None:
            planted = np.empty_like(self.planted_factors)
            planted[edge_perm] = self.planted_factors
        return dataclasses.replace(self, hypergraph=hg, features=features, labels=labels,
                                   train_mask=masks[0], val_mask=masks[1], test_mask=masks[2],
                                   planted_factors=planted)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_planted = (self.planted_factors is None and other.planted_factors is None) or (
            self.planted_factors is not None and other.planted_factors is not None
            and np.array_equal(self.planted_factors, other.planted_factors))
        return (self.task == other.task and self.hypergraph == other.hypergraph
                and self.num_classes == other.num_classes
                and self.num_planted_factors == other.num_planted_factors
                and self.label_factor == other.label_factor
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.train_mask, other.train_mask)
                and np.array_equal(self.val_mask, other.val_mask)
                and np.array_equal(self.test_mask, other.test_mask)
                and same_planted)

    __hash__ = None


def split_dataset(dataset, ratios, seed):
    """
    Draw train/val/test masks by seeded shuffle.

    Stratified by class when every class present has at least 3 members:
    each class is shuffled and spread evenly over one global ordering, which
    is then cut at the requested sizes.

    Args:
        dataset (Dataset): Source dataset
        ratios (tuple): (train, val, test) fractions, positive, sum ≤ 1
        seed (int): Shuffle seed

    Returns:
        Dataset: Copy with new masks
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or sum(ratios) > 1.0 + 1e-9:
        raise ValueError(f"split ratios must be three positive fractions summing to at most 1, got {ratios}")

    labels = dataset.labels
    n = labels.shape[0]
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    stratified = bool(counts.size) and counts.min() >= 3

    if stratified:
        keys = np.empty(n)
        for c in classes:
            members = np.flatnonzero(labels == c)
            rng.shuffle(members)
            keys[members] = (np.arange(members.size) + rng.random(members.size)) / members.size
        order = np.argsort(keys, kind="stable")
    else:
        order = rng.permutation(n)

    sizes = [int(np.floor(r * n + 0.5)) for r in ratios]
    if sum(sizes) > n:
        sizes[0] -= sum(sizes) - n
    bounds = np.cumsum([0] + sizes)
    masks = []
    for i in range(3):
        mask = np.zeros(n, dtype=bool)
        mask[order[bounds[i]:bounds[i + 1]]] = True
        masks.append(mask)

    for name, mask in zip(("train", "val", "test"), masks):
        missing = np.setdiff1d(classes, labels[mask])
        if missing.size:
            message = f"{name} split is missing classes {missing.tolist()}"
            logger.warning(message)
            warnings.warn(message, EmptyClassAfterSplit)

    logger.info(f"Split {n} units into {sizes[0]}/{sizes[1]}/{sizes[2]} "
                f"({'stratified' if stratified else 'plain shuffle'}, seed {seed})")
    return dataset.with_splits(*masks)


def save_dataset(dataset, path):
    """
    Write a dataset to the NHNN container.

    Args:
        dataset (Dataset): Dataset to save
        path (str): Output file
    """
    hg = dataset.hypergraph
    header = {
        "task": dataset.task,
        "N": hg.num_nodes,
        "M": hg.num_hyperedges,
        "d0": int(dataset.feature_dim),
        "C": int(dataset.num_classes),
        "S": int(dataset.num_samples),
        "has_planted": dataset.has_planted,
        "num_planted_factors": int(dataset.num_planted_factors),
        "label_factor": int(dataset.label_factor),
    }
    sections = [
        np.array([hg.num_incidences], dtype="<u8"),
        hg.pairs.astype("<u4"),
        dataset.features.astype("<f4"),
        dataset.labels.astype("<u4"),
        dataset.train_mask.astype("u1"),
        dataset.val_mask.astype("u1"),
        dataset.test_mask.astype("u1"),
    ]
    if dataset.has_planted:
        sections.append(dataset.planted_factors.astype("<u4"))
    write_container(path, DATASET_MAGIC, header, sections)
    logger.info(f"Saved dataset ({dataset.task} task, N={hg.num_nodes}, M={hg.num_hyperedges}) to {path}")


def load_dataset(path):
    """
    Read a dataset written by save_dataset.

    Returns:
        Dataset: Loaded dataset
    """
    header, reader = read_container(path, DATASET_MAGIC)
    try:
        task = header["task"]
        num_nodes, num_hyperedges = int(header["N"]), int(header["M"])
        d0, num_classes, num_samples = int(header["d0"]), int(header["C"]), int(header["S"])
        has_planted = bool(header["has_planted"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFile(f"{path}: incomplete header: {e}") from e

    count = int(reader.read("<u8", 1)[0])
    pairs = reader.read("<u4", 2 * count).reshape(-1, 2).astype(np.int64)
    if task == TASK_HYPERGRAPH:
        shape, population = (num_samples, num_nodes, d0), num_samples
    elif task == TASK_HYPEREDGE:
        shape, population = (num_nodes, d0), num_hyperedges
    else:
        shape, population = (num_nodes, d0), num_nodes
    features = reader.read("<f4", int(np.prod(shape))).reshape(shape)
    labels = reader.read("<u4", population)
    masks = [reader.read("u1", population).astype(bool) for _ in range(3)]
    planted = reader.read("<u4", num_hyperedges) if has_planted else None
    reader.finish()

    try:
        dataset = Dataset(
            task=task,
            hypergraph=build_hypergraph(pairs, num_nodes, num_hyperedges),
            features=features,
            labels=labels,
            num_classes=num_classes,
            train_mask=masks[0],
            val_mask=masks[1],
            test_mask=masks[2],
            planted_factors=planted,
            num_planted_factors=int(header.get("num_planted_factors", 0)),
            label_factor=int(header.get("label_factor", 0)),
        )
    except ValueError as e:
        raise MalformedFile(f"{path}: inconsistent contents: {e}") from e
    logger.info(f"Loaded dataset from {path}")
    return dataset
