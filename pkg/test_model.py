import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import expit

from autodiff import Tensor, chunk_cols
from hypergraph import TASK_HYPEREDGE, TASK_HYPERGRAPH, TASK_NODE, build_hypergraph
from model import (
    BilinearScorerParams, ModelConfig, ModelConfigError, aggregation_first_branch, disentangle_first_branch,
    factor_encode, hgnn_baseline_layer, hyperedge_to_node, init_encoder, init_params, load_params,
    model_forward, relevance_scores, save_params, weighted_hyperedge_reps
)


def _random_hypergraph(rng, n=12, m=5, size=3):
    pairs = set()
    for e in range(m):
        for v in rng.choice(n, size=size, replace=False):
            pairs.add((int(v), e))
    return build_hypergraph(sorted(pairs), n, m)


def _sized_hypergraph(rng, n=50, m=20, max_size=5):
    # size 0 leaves the hyperedge empty
    pairs = []
    for e in range(m):
        size = int(rng.integers(0, max_size + 1))
        pairs.extend((int(v), e) for v in rng.choice(n, size=size, replace=False))
    return build_hypergraph(pairs, n, m)


def _degenerate_case(rng):
    """Hypergraph with singleton, identical-member and generic hyperedges on fresh nodes."""
    d_in = int(rng.integers(2, 6))
    rows, pairs, kinds = [], [], []
    for e in range(int(rng.integers(3, 8))):
        kind = rng.choice(["singleton", "identical", "generic"])
        size = 1 if kind == "singleton" else int(rng.integers(2, 5))
        if kind == "identical":
            block = np.repeat(rng.standard_normal((1, d_in)), size, axis=0)
        else:
            block = rng.standard_normal((size, d_in))
        start = len(rows)
        rows.extend(block)
        pairs.extend((start + i, e) for i in range(size))
        kinds.append(kind)
    hg = build_hypergraph(pairs, len(rows), len(kinds))
    return Tensor(np.array(rows)), hg, np.array(kinds)


def _config(**overrides):
    base = dict(num_layers=2, num_factors=2, hidden=8, dropout=0.0, variant="full")
    base.update(overrides)
    return ModelConfig(**base)


def test_model_config_validation_and_aliases():
    assert ModelConfig(variant="ablation-no-naturality").variant == "ablation"
    assert ModelConfig(variant="alt").variant == "alt-branch"
    with pytest.raises(ModelConfigError):
        ModelConfig(hidden=10, num_factors=4)
    with pytest.raises(ModelConfigError):
        ModelConfig(beta=1.5)
    with pytest.raises(ModelConfigError):
        ModelConfig(variant="dense")


def test_factor_encoder_zero_fixed_point():
    enc = init_encoder(4, 6, 2, np.random.default_rng(0), np.float64)
    assert_array_equal(factor_encode(Tensor(np.zeros((3, 4))), enc).data, 0.0)


def test_encoder_equals_independent_column_blocks():
    rng = np.random.default_rng(1)
    enc = init_encoder(6, 4, 2, rng, np.float64)
    enc.bias.data = rng.standard_normal(4)
    x = Tensor(rng.standard_normal((4, 6)))
    chunks = chunk_cols(factor_encode(x, enc), 2)
    for k in range(2):
        assert_allclose(chunks[k].data, factor_encode(x, enc.block(k)).data, atol=1e-14)


def test_branches_agree_on_degenerate_hyperedges():
    rng = np.random.default_rng(2)
    # edge 0 is a singleton, edge 1 has identical members, edge 2 is generic
    hg = build_hypergraph([(0, 0), (1, 1), (2, 1), (3, 2), (4, 2)], 5, 3)
    x = rng.standard_normal((5, 3))
    x[2] = x[1]
    x = Tensor(x)
    enc = init_encoder(3, 4, 2, rng, np.float64)
    h = disentangle_first_branch(x, hg, enc).data
    h_tilde = aggregation_first_branch(x, hg, enc).data
    assert_allclose(h[:2], h_tilde[:2], atol=1e-12)
    assert not np.allclose(h[2], h_tilde[2])

    linear = init_encoder(3, 4, 2, rng, np.float64, activation="linear")
    assert_allclose(disentangle_first_branch(x, hg, linear).data, aggregation_first_branch(x, hg, linear).data,
                    atol=1e-12)


def test_branches_agree_on_randomized_degenerate_hyperedges():
    rng = np.random.default_rng(20)
    for _ in range(100):
        x, hg, kinds = _degenerate_case(rng)
        num_factors = int(rng.integers(1, 4))
        hidden = num_factors * int(rng.integers(1, 4))
        enc = init_encoder(x.shape[1], hidden, num_factors, rng, np.float64)
        enc.bias.data = rng.standard_normal(hidden)
        degenerate = kinds != "generic"
        h = disentangle_first_branch(x, hg, enc).data
        h_tilde = aggregation_first_branch(x, hg, enc).data
        assert np.abs(h[degenerate] - h_tilde[degenerate]).max(initial=0.0) <= 1e-12

        linear = init_encoder(x.shape[1], hidden, num_factors, rng, np.float64, activation="linear")
        linear.bias.data = rng.standard_normal(hidden)
        gap = disentangle_first_branch(x, hg, linear).data - aggregation_first_branch(x, hg, linear).data
        assert np.abs(gap).max() <= 1e-12


def test_relevance_of_identical_and_opposite_chunks():
    h = Tensor(np.random.default_rng(3).standard_normal((3, 4)))
    scorer = BilinearScorerParams([Tensor(np.eye(2)), Tensor(np.eye(2))])
    assert_allclose(relevance_scores(h, h, scorer).data, 0.7310586, atol=1e-7)
    assert_allclose(relevance_scores(h, -h, scorer).data, 0.2689414, atol=1e-7)


def test_relevance_matches_loop_oracle():
    rng = np.random.default_rng(4)
    h, h_tilde = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
    weights = [rng.standard_normal((3, 3)) for _ in range(2)]
    alpha = relevance_scores(Tensor(h), Tensor(h_tilde), BilinearScorerParams([Tensor(w) for w in weights])).data
    for i in range(5):
        for k in range(2):
            a = h[i, 3 * k:3 * k + 3] / np.linalg.norm(h[i, 3 * k:3 * k + 3])
            b = h_tilde[i, 3 * k:3 * k + 3] / np.linalg.norm(h_tilde[i, 3 * k:3 * k + 3])
            assert abs(alpha[i, k] - expit(a @ weights[k] @ b)) < 1e-12


def test_relevance_matches_loop_oracle_at_size():
    for seed in range(5):
        rng = np.random.default_rng(30 + seed)
        num_factors = int(rng.integers(1, 4))
        width = int(rng.integers(1, 5))
        h, h_tilde = rng.standard_normal((20, num_factors * width)), rng.standard_normal((20, num_factors * width))
        weights = [rng.standard_normal((width, width)) for _ in range(num_factors)]
        alpha = relevance_scores(Tensor(h), Tensor(h_tilde), BilinearScorerParams([Tensor(w) for w in weights])).data
        assert alpha.shape == (20, num_factors)
        for i in range(20):
            for k in range(num_factors):
                cols = slice(width * k, width * (k + 1))
                a = h[i, cols] / np.linalg.norm(h[i, cols])
                b = h_tilde[i, cols] / np.linalg.norm(h_tilde[i, cols])
                assert abs(alpha[i, k] - expit(a @ weights[k] @ b)) < 1e-12


def test_scorer_transpose_identity():
    rng = np.random.default_rng(5)
    h, h_tilde = Tensor(rng.standard_normal((4, 6))), Tensor(rng.standard_normal((4, 6)))
    weights = [rng.standard_normal((3, 3)) for _ in range(2)]
    forward = relevance_scores(h, h_tilde, BilinearScorerParams([Tensor(w) for w in weights])).data
    swapped = relevance_scores(h_tilde, h, BilinearScorerParams([Tensor(w.T) for w in weights])).data
    assert_allclose(forward, swapped, atol=1e-12)


def test_hyperedge_to_node_loop_oracle():
    rng = np.random.default_rng(6)
    # node 4 has no hyperedges
    hg = build_hypergraph([(0, 0), (1, 0), (1, 1), (2, 1), (3, 1), (3, 2), (0, 2)], 5, 3)
    h = rng.standard_normal((3, 4))
    alpha = rng.uniform(0.1, 0.9, (3, 2))
    hw = weighted_hyperedge_reps(Tensor(h), Tensor(alpha))
    y = hyperedge_to_node(hw, Tensor(alpha), hg).data
    for v in range(5):
        for k in range(2):
            num, den = np.zeros(2), 0.0
            for e in hg.incident_edges(v):
                num += alpha[e, k] * h[e, 2 * k:2 * k + 2]
                den += alpha[e, k]
            expected = num / den if den > 0 else num
            assert_allclose(y[v, 2 * k:2 * k + 2], expected, atol=1e-12)
    # node 2 sits in hyperedge 1 only
    assert_allclose(y[2], h[1], atol=1e-12)
    assert_array_equal(y[4], 0.0)


def test_hyperedge_to_node_loop_oracle_at_size():
    for seed in range(5):
        rng = np.random.default_rng(40 + seed)
        hg = _sized_hypergraph(rng)
        num_factors = int(rng.integers(1, 4))
        width = int(rng.integers(1, 4))
        h = rng.standard_normal((20, num_factors * width))
        alpha = rng.uniform(0.05, 0.95, (20, num_factors))
        y = hyperedge_to_node(weighted_hyperedge_reps(Tensor(h), Tensor(alpha)), Tensor(alpha), hg).data
        for v in range(50):
            for k in range(num_factors):
                cols = slice(width * k, width * (k + 1))
                num, den = np.zeros(width), 0.0
                for e in hg.incident_edges(v):
                    num += alpha[e, k] * h[e, cols]
                    den += alpha[e, k]
                expected = num / den if den > 0 else num
                assert_allclose(y[v, cols], expected, atol=1e-12)


def test_hgnn_two_identical_nodes_identity_weight():
    hg = build_hypergraph([(0, 0), (1, 0)], 2, 1)
    x = np.array([[0.3, -1.2], [0.3, -1.2]])
    out = hgnn_baseline_layer(Tensor(x), hg, Tensor(np.eye(2))).data
    assert_allclose(out, x, atol=1e-12)


def test_hgnn_without_hyperedges_is_zero():
    hg = build_hypergraph([], 3, 0)
    out = hgnn_baseline_layer(Tensor(np.ones((3, 2))), hg, Tensor(np.eye(2))).data
    assert_array_equal(out, np.zeros((3, 2)))


def test_hgnn_matches_dense_oracle():
    rng = np.random.default_rng(7)
    hg = build_hypergraph([(0, 0), (1, 0), (2, 0), (2, 1), (3, 1), (4, 2)], 6, 4)
    x, w = rng.standard_normal((6, 3)), rng.standard_normal((3, 2))
    inc = hg.incidence_matrix()
    dv, de = inc.sum(axis=1), inc.sum(axis=0)
    dv_inv = np.diag(np.where(dv > 0, 1.0 / np.sqrt(np.maximum(dv, 1)), 0.0))
    de_inv = np.diag(np.where(de > 0, 1.0 / np.maximum(de, 1), 0.0))
    expected = dv_inv @ inc @ de_inv @ inc.T @ dv_inv @ x @ w
    assert_allclose(hgnn_baseline_layer(Tensor(x), hg, Tensor(w)).data, expected, atol=1e-12)


def test_hgnn_matches_dense_oracle_at_size():
    for seed in range(5):
        rng = np.random.default_rng(50 + seed)
        hg = _sized_hypergraph(rng)
        x, w = rng.standard_normal((50, 4)), rng.standard_normal((4, 3))
        inc = hg.incidence_matrix()
        dv, de = inc.sum(axis=1), inc.sum(axis=0)
        dv_inv = np.diag(np.where(dv > 0, 1.0 / np.sqrt(np.maximum(dv, 1)), 0.0))
        de_inv = np.diag(np.where(de > 0, 1.0 / np.maximum(de, 1), 0.0))
        expected = dv_inv @ inc @ de_inv @ inc.T @ dv_inv @ x @ w
        assert_allclose(hgnn_baseline_layer(Tensor(x), hg, Tensor(w)).data, expected, atol=1e-12)


def test_ablation_equals_full_with_unit_relevance():
    rng = np.random.default_rng(8)
    hg = _random_hypergraph(rng)
    x = rng.standard_normal((12, 5))
    full = _config()
    params = init_params(full, 5, 3, hg.num_hyperedges, TASK_NODE, np.random.default_rng(0))
    overridden = model_forward(x, hg, params, full, alpha_override=1.0).logits.data
    ablated = model_forward(x, hg, params, _config(variant="ablation")).logits.data
    assert_allclose(overridden, ablated, atol=1e-12)


def _moved_rows(x, perm, axis=0):
    moved = np.empty_like(x)
    index = [slice(None)] * x.ndim
    index[axis] = perm
    moved[tuple(index)] = x
    return moved


def test_permutation_equivariance():
    rng = np.random.default_rng(9)
    hg = _random_hypergraph(rng)
    x = rng.standard_normal((12, 5))
    cfg = _config()
    params = init_params(cfg, 5, 3, hg.num_hyperedges, TASK_NODE, np.random.default_rng(1))
    base = model_forward(x, hg, params, cfg)

    for _ in range(20):
        node_perm, edge_perm = rng.permutation(12), rng.permutation(hg.num_hyperedges)
        moved = model_forward(_moved_rows(x, node_perm), hg.permute(node_perm, edge_perm), params, cfg)
        assert_allclose(moved.logits.data[node_perm], base.logits.data, atol=1e-10)
        for a, b in zip(base.alphas, moved.alphas):
            assert_allclose(b.data[edge_perm], a.data, atol=1e-10)


def test_hyperedge_task_permutation_equivariance():
    rng = np.random.default_rng(13)
    hg = _random_hypergraph(rng, n=12, m=6)
    x = rng.standard_normal((12, 5))
    cfg = _config()
    params = init_params(cfg, 5, 2, hg.num_hyperedges, TASK_HYPEREDGE, np.random.default_rng(4))
    base = model_forward(x, hg, params, cfg)

    for _ in range(20):
        node_perm, edge_perm = rng.permutation(12), rng.permutation(hg.num_hyperedges)
        moved = model_forward(_moved_rows(x, node_perm), hg.permute(node_perm, edge_perm), params, cfg)
        assert_allclose(moved.logits.data[edge_perm], base.logits.data, atol=1e-10)
        assert_allclose(moved.alphas[-1].data[edge_perm], base.alphas[-1].data, atol=1e-10)


def test_hypergraph_task_permutation_invariance():
    rng = np.random.default_rng(14)
    hg = _random_hypergraph(rng, n=8, m=4, size=3)
    features = rng.standard_normal((3, 8, 4))
    cfg = _config()
    params = init_params(cfg, 4, 2, hg.num_hyperedges, TASK_HYPERGRAPH, np.random.default_rng(5))
    base = model_forward(features, hg, params, cfg)
    blocks = params.classifier_weight.data.reshape(hg.num_hyperedges, cfg.hidden, 2)

    for _ in range(20):
        node_perm, edge_perm = rng.permutation(8), rng.permutation(hg.num_hyperedges)
        # the concatenated readout follows hyperedge order, so the classifier blocks move with it
        moved_params = params.bind([Tensor(t.data) for t in params.named_parameters().values()])
        moved_params.classifier_weight.data = _moved_rows(blocks, edge_perm).reshape(-1, 2)
        moved = model_forward(_moved_rows(features, node_perm, axis=1), hg.permute(node_perm, edge_perm),
                              moved_params, cfg)
        assert_allclose(moved.logits.data, base.logits.data, atol=1e-10)
        base_alpha = base.alphas[-1].data.reshape(3, hg.num_hyperedges, -1)
        moved_alpha = moved.alphas[-1].data.reshape(3, hg.num_hyperedges, -1)
        assert_allclose(moved_alpha[:, edge_perm], base_alpha, atol=1e-10)


def test_hyperedge_task_classifies_final_hyperedge_reps():
    rng = np.random.default_rng(15)
    hg = _random_hypergraph(rng, n=12, m=6)
    cfg = _config()
    params = init_params(cfg, 5, 3, hg.num_hyperedges, TASK_HYPEREDGE, np.random.default_rng(6))
    assert params.classifier_weight.shape == (8, 3)
    out = model_forward(rng.standard_normal((12, 5)), hg, params, cfg)
    assert out.logits.shape == (6, 3)
    expected = out.final_hyperedge_reps.data @ params.classifier_weight.data + params.classifier_bias.data
    assert_allclose(out.logits.data, expected, atol=1e-12)

    hgnn = _config(variant="hgnn")
    baseline = init_params(hgnn, 5, 3, hg.num_hyperedges, TASK_HYPEREDGE, np.random.default_rng(6))
    assert model_forward(rng.standard_normal((12, 5)), hg, baseline, hgnn).logits.shape == (6, 3)


def test_hypergraph_task_readout_is_per_sample():
    rng = np.random.default_rng(10)
    hg = _random_hypergraph(rng, n=6, m=3, size=2)
    features = rng.standard_normal((4, 6, 3))
    cfg = _config(num_layers=1)
    params = init_params(cfg, 3, 2, hg.num_hyperedges, TASK_HYPERGRAPH, np.random.default_rng(2))
    assert params.classifier_weight.shape == (3 * 8, 2)
    batch = model_forward(features, hg, params, cfg)
    assert batch.logits.shape == (4, 2)
    assert batch.alphas[0].shape == (12, 2)
    for s in range(4):
        single = model_forward(features[s:s + 1], hg, params, cfg).logits.data
        assert_allclose(batch.logits.data[s], single[0], atol=1e-12)


def test_hgnn_variant_has_no_factor_outputs():
    rng = np.random.default_rng(11)
    hg = _random_hypergraph(rng)
    cfg = _config(variant="hgnn", dis_weight=0.1)
    params = init_params(cfg, 5, 3, hg.num_hyperedges, TASK_NODE, np.random.default_rng(0))
    out = model_forward(rng.standard_normal((12, 5)), hg, params, cfg)
    assert out.logits.shape == (12, 3)
    assert out.alphas == [] and params.factor_classifiers == []
    assert out.final_hyperedge_reps.shape == (hg.num_hyperedges, 8)


def test_bind_preserves_parameter_order():
    cfg = _config(dis_weight=0.1)
    params = init_params(cfg, 5, 3, 4, TASK_NODE, np.random.default_rng(0))
    named = params.named_parameters()
    assert list(named)[:2] == ["layer0.encoder.weight", "layer0.encoder.bias"]
    assert "factor_classifier1.bias" in named
    rebound = params.bind([Tensor(t.data * 2.0) for t in named.values()])
    for (name, old), new in zip(named.items(), rebound.named_parameters().values()):
        assert_allclose(new.data, old.data * 2.0, err_msg=name)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    hg = _random_hypergraph(rng)
    x = rng.standard_normal((12, 5))
    cfg = _config(dis_weight=0.05)
    params = init_params(cfg, 5, 3, hg.num_hyperedges, TASK_NODE, np.random.default_rng(3))
    path = os.path.join(tmp_path, "params.nhnp")
    save_params(params, cfg, path)
    loaded, loaded_cfg = load_params(path)
    assert loaded_cfg == cfg
    for name, t in params.named_parameters().items():
        assert_array_equal(loaded.named_parameters()[name].data, t.data)
    assert_array_equal(model_forward(x, hg, loaded, cfg).logits.data, model_forward(x, hg, params, cfg).logits.data)
