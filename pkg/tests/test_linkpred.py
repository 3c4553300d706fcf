import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillsim.embeddings import hash_embed
from skillsim.linkpred import (
    GcnParams,
    Ranking,
    TrainConfig,
    TrainingError,
    bce_loss,
    gcn_forward,
    hit_at_k,
    init_params,
    load_checkpoint,
    loss_and_grads,
    normalize_adjacency,
    roc_auc,
    save_checkpoint,
    score_edge,
    top_k_semantic,
    top_k_synergy,
    train,
    write_history_csv,
)
from skillsim.miner import EdgeSample, EdgeSplits, SplitSpec, SynergyGraph, split_edges

import gcn_oracle


def graph(n, edges):
    return SynergyGraph(n, frozenset(edges))


def test_normalize_single_node():
    assert normalize_adjacency(graph(1, [])).tolist() == [[1.0]]


def test_normalize_two_nodes():
    assert normalize_adjacency(graph(2, [(0, 1)])).tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_normalize_path():
    a = normalize_adjacency(graph(3, [(0, 1), (1, 2)]))
    assert a[0, 1] == pytest.approx(1 / math.sqrt(2 * 3))
    assert a[1, 1] == pytest.approx(1 / 3)
    assert a[0, 0] == pytest.approx(1 / 2)


def test_normalize_matches_dense_oracle():
    edges = [(0, 1), (0, 3), (2, 3), (3, 4)]
    np.testing.assert_allclose(normalize_adjacency(graph(5, edges)), gcn_oracle.dense_norm_adj(5, edges))


def test_forward_zero_features():
    p = init_params(3, 4, 2, seed=1)
    H = gcn_forward(p, normalize_adjacency(graph(3, [(0, 1)])), np.zeros((3, 3)))
    assert not H.any()


def test_forward_identity():
    X = np.array([[0.5, 2.0, 0.0]])
    p = GcnParams(np.eye(3), np.eye(3))
    assert np.array_equal(gcn_forward(p, np.array([[1.0]]), X), X)


def test_forward_two_node_hand_product():
    adj = np.array([[0.5, 0.5], [0.5, 0.5]])
    X = np.array([[1.0, -2.0], [3.0, 0.0]])
    W1 = np.array([[1.0, 0.0], [0.5, -1.0]])
    W2 = np.array([[2.0], [1.0]])
    # AX = [[2, -1], [2, -1]]; AX W1 = [[1.5, 1], [1.5, 1]]; relu keeps it;
    # A H1 = same; times W2 -> 1.5*2 + 1 = 4
    H = gcn_forward(GcnParams(W1, W2), adj, X)
    assert H.tolist() == [[4.0], [4.0]]


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        gcn_forward(init_params(3, 2, 2, 0), np.eye(2), np.ones((2, 4)))


def test_score_edge_values():
    assert score_edge(np.array([[1.0, 0.0], [0.0, 1.0]]), 0, 1) == 0.5
    assert score_edge(np.array([[1.0], [1.0]]), 0, 1) == pytest.approx(0.7310586, abs=1e-7)
    assert score_edge(np.array([[2.0, 0.0], [2.0, 0.0]]), 0, 1) == pytest.approx(0.9820138, abs=1e-7)


def test_bce_values():
    assert bce_loss([0.5], [1]) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss([1 - 1e-7], [1]) <= 1.1e-7
    assert bce_loss([1.0], [1]) <= 1.1e-7
    assert bce_loss([0.9, 0.2], [1, 0]) == pytest.approx((-math.log(0.9) - math.log(0.8)) / 2, abs=1e-12)
    assert bce_loss([0.9, 0.2], [1, 0]) == pytest.approx(0.1643, abs=1e-4)


def test_bce_errors():
    with pytest.raises(ValueError):
        bce_loss([0.5], [1, 0])
    with pytest.raises(ValueError):
        bce_loss([], [])


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(5):
        n, dims, edges, X, samples = gcn_oracle.random_instance(rng)
        p = init_params(*dims, seed=i)
        adj = normalize_adjacency(n, edges)
        es = [EdgeSample(u, v, y) for u, v, y in samples]
        loss, dw1, dw2 = loss_and_grads(p, adj, X, es)
        assert loss == pytest.approx(gcn_oracle.loss(p.W1, p.W2, adj, X, samples), rel=1e-10)
        fd1, fd2 = gcn_oracle.finite_difference(p.W1.copy(), p.W2.copy(), adj, X, samples)
        worst = max(worst, gcn_oracle.relative_error(dw1, fd1), gcn_oracle.relative_error(dw2, fd2))
    assert worst < 1e-4


def planted(n=40, seed=0):
    rng = np.random.default_rng(seed)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < (0.4 if (i < n // 2) == (j < n // 2) else 0.02):
                edges.add((i, j))
    return graph(n, edges)


def small_setup(epochs=60):
    g = planted()
    X = np.stack([hash_embed(f"node {i}", 32) for i in range(g.node_count)])
    splits = split_edges(g, SplitSpec(seed=0))
    cfg = TrainConfig(epochs=epochs, hidden_dim=16, out_dim=16, seed=0)
    return g, X, splits, cfg


def test_train_is_bitwise_deterministic():
    g, X, splits, cfg = small_setup(30)
    a = train(g, X, splits, cfg)
    b = train(g, X, splits, cfg)
    assert a.params.W1.tobytes() == b.params.W1.tobytes()
    assert a.params.W2.tobytes() == b.params.W2.tobytes()
    assert a.history == b.history


def test_train_lowers_loss_and_records_dev():
    g, X, splits, cfg = small_setup()
    res = train(g, X, splits, cfg)
    assert res.history[-1][1] < res.history[0][1]
    assert all(dev is not None for _, _, dev in res.history)
    assert len(res.history) == cfg.epochs


def test_message_passing_sees_train_positives_only():
    g, X, splits, cfg = small_setup(2)
    res = train(g, X, splits, cfg)
    held = splits.positives("dev") + splits.positives("test")
    for u, v in held:
        assert res.adjacency[u, v] == 0.0
    u, v = splits.positives("train")[0]
    assert res.adjacency[u, v] > 0.0


def test_train_empty_split():
    g, X, _, cfg = small_setup()
    with pytest.raises(TrainingError, match="empty train split"):
        train(g, X, EdgeSplits([], [], []), cfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_checkpoint_roundtrip(tmp_path):
    p = init_params(4, 3, 2, seed=5)
    digest = save_checkpoint(tmp_path / "ck.txt", p, TrainConfig())
    q, header = load_checkpoint(tmp_path / "ck.txt")
    assert np.array_equal(p.W1, q.W1) and np.array_equal(p.W2, q.W2)
    assert header["config"]["epochs"] == 300
    assert digest == save_checkpoint(tmp_path / "ck2.txt", q, TrainConfig())


def test_history_csv(tmp_path):
    write_history_csv(tmp_path / "h.csv", [(1, 0.7, 0.8), (2, 0.6, None)])
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,train_loss,dev_loss", "1,0.7,0.8", "2,0.6,"]


def test_top_k_sizes():
    n = 200
    X = np.stack([hash_embed(f"api {i}", 16) for i in range(n)])
    p = init_params(16, 8, 8, seed=0)
    g = graph(n, [(0, 1), (1, 2)])
    assert len(top_k_synergy(p, g, X, 0, 5).ranked) == 5
    assert len(top_k_synergy(p, graph(4, []), X[:4], 0, 4).ranked) == 3
    assert len(top_k_semantic(X, 0, 5).ranked) == 5


def test_top_k_hand_scores():
    H = np.array([[1.0, 0.0], [0.2, 0.0], [0.9, 0.0]])
    adj = np.eye(3)
    p = GcnParams(np.eye(2), np.eye(2))
    # with identity adjacency and weights, relu(H) = H, so scores follow H[0].H[j]
    r = top_k_synergy(p, adj, H, 0, 2)
    assert r.ids == [2, 1]
    assert r.ranked[0][1] == pytest.approx(1 / (1 + math.exp(-0.9)))


def test_top_k_single_node():
    with pytest.raises(ValueError):
        top_k_synergy(init_params(2, 2, 2, 0), graph(1, []), np.ones((1, 2)), 0, 1)


def test_semantic_duplicate_ranks_first():
    X = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 2.0], [1.0, 0.0]])
    r = top_k_semantic(X, 0, 3)
    assert r.ranked[0][0] == 2
    assert r.ranked[0][1] == pytest.approx(1.0, abs=1e-12)


def test_semantic_hand_cosines():
    X = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.8, 0.6]])
    r = top_k_semantic(X, 0, 3)
    assert r.ids == [3, 1, 2]
    assert [s for _, s in r.ranked] == pytest.approx([0.8, 0.6, 0.0])


def test_ties_break_by_lower_id():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    assert top_k_semantic(X, 0, 3).ids == [1, 2, 3]


def test_hit_at_k_examples():
    r = Ranking(0, [(1, 0.9), (2, 0.8), (3, 0.7)])
    assert hit_at_k([r], {0: {2}}, 2) == 1.0
    assert hit_at_k([r], {0: {2}}, 1) == 0.0
    assert hit_at_k([r], {0: {9}}, 3) == 0.0
    with pytest.raises(KeyError):
        hit_at_k([r], {5: {1}}, 2)


def test_roc_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(2)
    scores = np.round(rng.random(60), 2)
    labels = rng.integers(0, 2, 60)
    assert roc_auc(scores, labels) == pytest.approx(gcn_oracle.pairwise_auc(scores, labels), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4))
def test_score_edge_symmetry(a, b):
    H = np.array([a, b])
    assert score_edge(H, 0, 1) == score_edge(H, 1, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 12))
def test_ranking_is_a_permutation_prefix(seed, n, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    p = init_params(3, 3, 3, seed)
    anchor = int(rng.integers(0, n))
    r = top_k_synergy(p, np.eye(n), X, anchor, k)
    scores = [s for _, s in r.ranked]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert len(set(r.ids)) == len(r.ids) == min(k, n - 1)
    assert anchor not in r.ids


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_hit_at_k_is_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    rankings, truth = [], {}
    for anchor in range(5):
        ids = [int(i) for i in rng.permutation(10) if i != anchor]
        rankings.append(Ranking(anchor, [(i, 0.0) for i in ids]))
        truth[anchor] = {int(x) for x in rng.choice(ids, size=2, replace=False)}
    values = [hit_at_k(rankings, truth, k) for k in range(1, 10)]
    assert values == sorted(values)
