# Hypergraph module: incidence structure, datasets, file container and planted-factor generator
from .structure import Hypergraph, HypergraphError, OutOfRangeIndex, DuplicatePair, build_hypergraph
from .container import ContainerError, MalformedFile, VersionMismatch
from .dataset import (
    Dataset, EmptyClassAfterSplit, TASK_NODE, TASK_HYPERGRAPH, TASK_HYPEREDGE, TASKS, split_dataset, save_dataset,
    load_dataset
)
from .generator import SyntheticSpec, DegenerateSpec, generate_planted, planted_factor_oracle, oracle_features

__all__ = [
    'Hypergraph', 'HypergraphError', 'OutOfRangeIndex', 'DuplicatePair', 'build_hypergraph',
    'ContainerError', 'MalformedFile', 'VersionMismatch',
    'Dataset', 'EmptyClassAfterSplit', 'TASK_NODE', 'TASK_HYPERGRAPH', 'TASK_HYPEREDGE', 'TASKS',
    'split_dataset', 'save_dataset', 'load_dataset',
    'SyntheticSpec', 'DegenerateSpec', 'generate_planted', 'planted_factor_oracle', 'oracle_features'
]
