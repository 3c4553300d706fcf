import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillsim.catalog import build_catalog
from skillsim.miner import (
    GraphError,
    ScriptDoc,
    ScriptSource,
    SplitSpec,
    SynergyGraph,
    build_graph,
    extract_api_mentions,
    read_edge_list,
    split_edges,
    write_edge_list,
)


def doc(code, i=0):
    return ScriptDoc(f"s{i}", ScriptSource.SAMPLE, code)


def letters_catalog(n=6):
    return build_catalog([{"full_name": f"obj.m{chr(97 + i)}", "kind": "method"} for i in range(n)])


def test_method_call_is_found(tiny_catalog):
    found = extract_api_mentions(doc("var e = doc.pathItems.ellipse(10,10);"), tiny_catalog)
    assert found == {tiny_catalog.id_of("pathItems.ellipse")}


def test_empty_code(tiny_catalog):
    assert extract_api_mentions(doc(""), tiny_catalog) == set()


def test_method_without_call_is_ignored(tiny_catalog):
    assert extract_api_mentions(doc("var f = doc.pathItems.ellipse;"), tiny_catalog) == set()


def test_call_with_whitespace_before_paren(tiny_catalog):
    assert extract_api_mentions(doc("rectangle  (1, 2)"), tiny_catalog) == {1}


def test_attribute_needs_only_the_token(tiny_catalog):
    assert extract_api_mentions(doc("var s = app.activeDocument.selection;"), tiny_catalog) == {2}


def test_string_literal_matches_too(tiny_catalog):
    assert extract_api_mentions(doc('alert("ellipse(")'), tiny_catalog) == {0}


def test_command_rule_uses_line_heads():
    cat = build_catalog([{"full_name": "canvas.MOVE", "kind": "method"},
                         {"full_name": "canvas.ADD", "kind": "method"}])
    found = extract_api_mentions("ADD rect a 0 0 1 1\n  MOVE a 1 1\nPRINT ADD", cat, method_rule="command")
    assert found == {0, 1}
    assert extract_api_mentions("PRINT MOVE", cat, method_rule="command") == set()


def test_unknown_method_rule(tiny_catalog):
    with pytest.raises(ValueError):
        extract_api_mentions("x", tiny_catalog, method_rule="regex")


def test_single_script_makes_a_clique():
    cat = letters_catalog(3)
    g = build_graph([doc("ma(); mb(); mc();")], cat)
    assert g.sorted_edges() == [(0, 1), (0, 2), (1, 2)]


def test_two_scripts_share_a_node():
    cat = letters_catalog(3)
    g = build_graph([doc("ma(); mb();", 0), doc("mb(); mc();", 1)], cat)
    assert g.sorted_edges() == [(0, 1), (1, 2)]
    assert not g.has_edge(0, 2)


def test_zero_scripts():
    g = build_graph([], letters_catalog(3))
    assert g.node_count == 3 and not g.edges


def test_graph_rejects_self_loops():
    with pytest.raises(GraphError):
        SynergyGraph(3, frozenset({(1, 1)}))


def full_graph(n):
    return SynergyGraph(n, frozenset((u, v) for u in range(n) for v in range(u + 1, n)))


def ring_graph(n_edges, n_nodes):
    edges = set()
    rng = random.Random(7)
    while len(edges) < n_edges:
        u, v = rng.sample(range(n_nodes), 2)
        edges.add((min(u, v), max(u, v)))
    return SynergyGraph(n_nodes, frozenset(edges))


def test_complete_graph_has_no_negatives():
    with pytest.raises(GraphError, match="not enough non-edges"):
        split_edges(full_graph(4))


def test_too_few_edges():
    g = SynergyGraph(10, frozenset({(0, 1), (2, 3)}))
    with pytest.raises(GraphError, match="too few edges"):
        split_edges(g)


def test_hundred_positives_split_85_5_10():
    g = ring_graph(100, 60)
    s = split_edges(g, SplitSpec())
    for name, want in (("train", 85), ("dev", 5), ("test", 10)):
        samples = getattr(s, name)
        assert sum(x.label for x in samples) == want
        assert sum(1 - x.label for x in samples) == want


def test_remainder_goes_to_train():
    s = split_edges(ring_graph(37, 30))
    assert [len(s.positives(n)) for n in ("train", "dev", "test")] == [33, 1, 3]


def test_split_is_seed_deterministic():
    g = ring_graph(120, 50)
    a = split_edges(g, SplitSpec(seed=3))
    b = split_edges(g, SplitSpec(seed=3))
    c = split_edges(g, SplitSpec(seed=4))
    assert a == b
    assert a != c


def test_split_spec_validation():
    with pytest.raises(GraphError):
        SplitSpec(0.5, 0.2, 0.2)
    with pytest.raises(GraphError):
        SplitSpec(negative_ratio=0)


def test_edge_list_roundtrip(tmp_path):
    g = ring_graph(25, 12)
    write_edge_list(g, tmp_path / "g.edges")
    assert read_edge_list(tmp_path / "g.edges") == g
    assert (tmp_path / "g.edges").read_text().startswith("# nodes 12\n")


@st.composite
def graphs(draw):
    n = draw(st.integers(8, 25))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    k = draw(st.integers(10, len(pairs) // 2))
    chosen = draw(st.permutations(pairs))[:k]
    return SynergyGraph(n, frozenset(chosen))


@settings(max_examples=40, deadline=None)
@given(graphs(), st.integers(0, 2**32 - 1))
def test_split_properties(g, seed):
    s = split_edges(g, SplitSpec(seed=seed))
    pos_sets = []
    negs = []
    for samples in (s.train, s.dev, s.test):
        for x in samples:
            assert x.u < x.v
            assert x.label == int(g.has_edge(x.u, x.v))
        pos_sets.append({(x.u, x.v) for x in samples if x.label})
        negs.extend((x.u, x.v) for x in samples if not x.label)
    assert not (pos_sets[0] & pos_sets[1] or pos_sets[0] & pos_sets[2] or pos_sets[1] & pos_sets[2])
    assert set().union(*pos_sets) == set(g.edges)
    assert len(negs) == len(set(negs))
    assert not set(negs) & g.edges


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sets(st.sampled_from("abcdef"), max_size=4), max_size=8), st.randoms())
def test_graph_is_order_independent(script_sets, rnd):
    cat = letters_catalog(6)
    docs = [doc(" ".join(f"m{c}()" for c in sorted(s)), i) for i, s in enumerate(script_sets)]
    shuffled = list(docs)
    rnd.shuffle(shuffled)
    assert build_graph(docs, cat) == build_graph(shuffled, cat)
