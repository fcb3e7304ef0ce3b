import os
import warnings

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from hypergraph import (
    Dataset, DegenerateSpec, DuplicatePair, EmptyClassAfterSplit, MalformedFile, OutOfRangeIndex,
    SyntheticSpec, TASK_HYPEREDGE, TASK_HYPERGRAPH, VersionMismatch, build_hypergraph, generate_planted, load_dataset,
    planted_factor_oracle, save_dataset, split_dataset
)
from hypergraph.container import read_container, write_container


def _dataset(n=100, classes=4, seed=0):
    rng = np.random.default_rng(seed)
    hg = build_hypergraph([(v, v % 10) for v in range(n)], n, 10)
    return Dataset(task="node", hypergraph=hg, features=rng.standard_normal((n, 4)),
                   labels=np.arange(n) % classes, num_classes=classes)


def test_build_hypergraph_dual_views():
    hg = build_hypergraph([(1, 1), (0, 0), (1, 0)], 2, 2)
    assert_array_equal(hg.pairs, [[0, 0], [1, 0], [1, 1]])
    assert hg.incident_edges(1).tolist() == [0, 1]
    assert hg.members(0).tolist() == [0, 1]
    assert hg.num_incidences == hg.node_degrees.sum() == hg.edge_degrees.sum() == 3


def test_dual_csr_consistency_random():
    rng = np.random.default_rng(3)
    pairs = {(int(rng.integers(0, 30)), int(rng.integers(0, 12))) for _ in range(80)}
    hg = build_hypergraph(sorted(pairs), 30, 12)
    from_nodes = {(v, int(e)) for v, edges in enumerate(hg.csr_by_node) for e in edges}
    from_edges = {(int(v), e) for e, members in enumerate(hg.csr_by_edge) for v in members}
    assert from_nodes == from_edges == pairs
    for members in hg.csr_by_edge:
        assert list(members) == sorted(members)


def test_build_hypergraph_empty_and_errors():
    hg = build_hypergraph([], 3, 0)
    assert_array_equal(hg.node_degrees, [0, 0, 0])
    with pytest.raises(OutOfRangeIndex):
        build_hypergraph([(5, 0)], 3, 1)
    with pytest.raises(DuplicatePair):
        build_hypergraph([(0, 0), (0, 0)], 3, 1)


def test_tile_is_disjoint_union():
    hg = build_hypergraph([(0, 0), (1, 0), (1, 1), (2, 1)], 3, 2)
    tiled = hg.tile(3)
    assert tiled.num_nodes == 9 and tiled.num_hyperedges == 6
    assert tiled.members(5).tolist() == [7, 8]
    assert hg.tile(3) is tiled


def test_permute_hypergraph():
    hg = build_hypergraph([(0, 0), (1, 0), (2, 1)], 3, 2)
    moved = hg.permute([2, 0, 1], [1, 0])
    assert moved.members(1).tolist() == [0, 2]
    assert moved.members(0).tolist() == [1]


def test_split_sizes_and_determinism():
    ds = _dataset()
    a = split_dataset(ds, (0.5, 0.25, 0.25), seed=7)
    b = split_dataset(ds, (0.5, 0.25, 0.25), seed=7)
    assert (a.train_mask.sum(), a.val_mask.sum(), a.test_mask.sum()) == (50, 25, 25)
    assert_array_equal(a.train_mask, b.train_mask)
    assert not np.any(a.train_mask & a.val_mask) and not np.any(a.val_mask & a.test_mask)
    assert np.all(a.train_mask | a.val_mask | a.test_mask)
    small = split_dataset(ds, (0.1, 0.25, 0.25), seed=7)
    assert small.train_mask.sum() == 10


def test_split_is_stratified():
    ds = _dataset(n=100, classes=4)
    split = split_dataset(ds, (0.5, 0.25, 0.25), seed=1)
    counts = np.bincount(ds.labels[split.train_mask], minlength=4)
    assert counts.min() >= 11 and counts.max() <= 14


def test_split_warns_when_class_missing():
    hg = build_hypergraph([], 4, 0)
    ds = Dataset(task="node", hypergraph=hg, features=np.zeros((4, 2)), labels=[0, 0, 0, 1], num_classes=2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        split_dataset(ds, (0.5, 0.25, 0.25), seed=0)
    assert any(issubclass(w.category, EmptyClassAfterSplit) for w in caught)


def test_generator_is_deterministic():
    spec = SyntheticSpec(num_nodes=100, num_hyperedges=40, num_factors=2, noise_std=0.0, seed=5)
    assert generate_planted(spec) == generate_planted(spec)


def test_generator_single_factor_and_degrees():
    ds = generate_planted(SyntheticSpec(num_nodes=60, num_hyperedges=20, num_factors=1, feature_dim=6, seed=2))
    assert_array_equal(ds.planted_factors, np.zeros(20))
    assert ds.hypergraph.edge_degrees.min() >= 2


def test_generator_rejects_degenerate_spec():
    with pytest.raises(DegenerateSpec):
        generate_planted(SyntheticSpec(feature_dim=15, num_factors=2))
    with pytest.raises(DegenerateSpec):
        generate_planted(SyntheticSpec(mean_degree=1.5))
    with pytest.raises(DegenerateSpec):
        generate_planted(SyntheticSpec(task=TASK_HYPEREDGE, num_factors=1, feature_dim=6))
    with pytest.raises(DegenerateSpec):
        generate_planted(SyntheticSpec(num_clusters=0))


def test_planted_incidence_partitions_pairs():
    ds = generate_planted(SyntheticSpec(num_nodes=80, num_hyperedges=30, num_factors=3, feature_dim=12, seed=1))
    parts = [ds.planted_incidence(k) for k in range(3)]
    assert sum(p.shape[0] for p in parts) == ds.hypergraph.num_incidences


def test_planted_oracle_is_learnable():
    ds = generate_planted(SyntheticSpec(num_nodes=200, num_hyperedges=80, num_factors=2, feature_dim=16, seed=0))
    assert planted_factor_oracle(ds, seed=0) >= 0.9


def test_hypergraph_task_generation():
    ds = generate_planted(SyntheticSpec(num_nodes=20, num_hyperedges=8, task=TASK_HYPERGRAPH, num_samples=12,
                                        feature_dim=4, seed=3))
    assert ds.features.shape == (12, 20, 4)
    assert ds.labels.shape == (12,)


def _block_dispersion(ds, factor):
    """Mean member variance of one feature block per hyperedge (NaN for hyperedges under two members)."""
    block = ds.feature_dim // ds.num_planted_factors
    out = np.full(ds.num_hyperedges, np.nan)
    for e in range(ds.num_hyperedges):
        members = ds.hypergraph.members(e)
        if members.size >= 2:
            out[e] = ds.features[members, factor * block:(factor + 1) * block].var(axis=0).mean()
    return out


def test_planted_types_leave_a_trace_in_features():
    ds = generate_planted(SyntheticSpec(num_nodes=200, num_hyperedges=200, num_factors=2, feature_dim=16, seed=6))
    for factor in range(2):
        spread = _block_dispersion(ds, factor)
        own = np.nanmean(spread[ds.planted_factors == factor])
        other = np.nanmean(spread[ds.planted_factors != factor])
        assert own < 0.75 * other, (factor, own, other)


def test_hyperedge_task_generation():
    ds = generate_planted(SyntheticSpec(num_nodes=60, num_hyperedges=30, num_factors=3, feature_dim=12,
                                        task=TASK_HYPEREDGE, seed=7))
    assert ds.features.shape == (60, 12)
    assert ds.population == 30 and ds.num_classes == 3
    assert_array_equal(ds.labels, ds.planted_factors)


def test_hyperedge_oracle_is_learnable():
    ds = generate_planted(SyntheticSpec(num_nodes=200, num_hyperedges=200, num_factors=2, feature_dim=16,
                                        task=TASK_HYPEREDGE, seed=0))
    assert planted_factor_oracle(ds, seed=0) >= 0.75


def test_hyperedge_task_round_trip_and_permute(tmp_path):
    ds = split_dataset(generate_planted(SyntheticSpec(num_nodes=40, num_hyperedges=24, task=TASK_HYPEREDGE,
                                                      seed=8)), (0.5, 0.25, 0.25), 0)
    assert ds.train_mask.shape == (24,)
    path = os.path.join(tmp_path, "edges.nhnn")
    save_dataset(ds, path)
    assert load_dataset(path) == ds

    rng = np.random.default_rng(0)
    node_perm, edge_perm = rng.permutation(40), rng.permutation(24)
    moved = ds.permute(node_perm, edge_perm)
    assert_array_equal(moved.labels[edge_perm], ds.labels)
    assert_array_equal(moved.train_mask[edge_perm], ds.train_mask)
    assert_array_equal(moved.features[node_perm], ds.features)
    assert_array_equal(moved.labels, moved.planted_factors)


def test_dataset_round_trip(tmp_path):
    ds = split_dataset(generate_planted(SyntheticSpec(num_nodes=50, num_hyperedges=20, seed=4)),
                       (0.5, 0.25, 0.25), 0)
    path = os.path.join(tmp_path, "data.nhnn")
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_truncated_file_is_malformed(tmp_path):
    ds = generate_planted(SyntheticSpec(num_nodes=30, num_hyperedges=10, seed=4))
    path = os.path.join(tmp_path, "data.nhnn")
    save_dataset(ds, path)
    with open(path, "rb") as f:
        blob = f.read()
    with open(path, "wb") as f:
        f.write(blob[:-7])
    with pytest.raises(MalformedFile):
        load_dataset(path)


def test_wrong_version_is_rejected(tmp_path):
    path = os.path.join(tmp_path, "data.nhnn")
    write_container(path, b"NHNN", {}, [])
    with open(path, "rb") as f:
        blob = bytearray(f.read())
    blob[4:6] = np.uint16(2).astype("<u2").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(blob))
    with pytest.raises(VersionMismatch):
        read_container(path, b"NHNN")
