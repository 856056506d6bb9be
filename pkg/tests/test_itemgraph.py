import itertools
import random

import pytest

from rigkit.graph import EdgeKind, NodeKind, TypedGraph
from rigkit.itemgraph import (
    ItemGraph,
    ItemGraphError,
    Qualifier,
    SessionPairSelection,
    Variant,
    build_item_graph,
    concept_reachable,
    count_relation_metapaths,
    export_item_graph,
    filter_pairs,
    load_item_graph,
    select_session_pairs,
    session_items,
)

import oracles


def _fixture(s_ints, concepts=None, rel=(), items=None):
    g = TypedGraph()
    ids = {}
    names = sorted({i for v in s_ints.values() for i in v} | {x for e in rel for x in e[:2]} | set(concepts or {}))
    for n in names:
        ids[n] = g.add_node(NodeKind.INTENTION, n)
    for s, ints in s_ints.items():
        sid = g.add_node(NodeKind.SESSION, s, node_id=f"session:{s}")
        for i in ints:
            g.add_edge(sid, ids[i], EdgeKind.SESSION_TO_INTENTION)
        for pos, it in enumerate((items or {}).get(s, [])):
            g.add_edge(g.add_node(NodeKind.ITEM, it, node_id=f"item:{it}"), sid, EdgeKind.ITEM_TO_SESSION, position=pos)
    for i, cs in (concepts or {}).items():
        for c in cs:
            g.add_edge(ids[i], g.add_node(NodeKind.CONCEPT, c), EdgeKind.INTENTION_TO_CONCEPT)
    for a, b, kind, prov in rel:
        g.add_edge(ids[a], ids[b], kind, 0.95, provenance=prov)
    return g, ids


def test_metapath_spec_fixture():
    g, _ = _fixture({"s1": ["a", "b"], "s2": ["c"]},
                    rel=[("a", "c", EdgeKind.CAUSALITY, "Cause"), ("b", "c", EdgeKind.SYNCHRONOUS, "Simultaneous")])
    assert count_relation_metapaths(g, "session:s1", "session:s2") == 2
    assert count_relation_metapaths(g, "session:s2", "session:s1") == 2


def test_metapath_requires_membership():
    g, _ = _fixture({"s1": ["i"], "s2": ["i"]}, rel=[("i", "j", EdgeKind.CAUSALITY, "Cause")])
    assert count_relation_metapaths(g, "session:s1", "session:s2") == 0
    g2, _ = _fixture({"s1": ["a"], "s2": ["b"]})
    assert count_relation_metapaths(g2, "session:s1", "session:s2") == 0
    with pytest.raises(KeyError):
        count_relation_metapaths(g2, "session:s1", "session:nope")


@pytest.mark.parametrize("c1,c2,expected", [
    (["gift"], ["gift", "party"], True),
    ([], ["gift"], False),
    (["a", "b"], ["b", "c"], False),
    (["a", "b"], ["a", "b"], True),
])
def test_concept_reachable(c1, c2, expected):
    concepts = {"x": c1, "y": c2}
    g, _ = _fixture({"s1": ["x"], "s2": ["y"]}, concepts=concepts)
    assert concept_reachable(g, "session:s1", "session:s2") is expected
    assert concept_reachable(g, "session:s2", "session:s1") is expected


def test_oracle_on_random_graphs():
    for seed in range(100):
        g = oracles.random_rig(seed)
        assert len(g.nodes()) <= 50
        sessions = g.node_ids(NodeKind.SESSION)
        for s1, s2 in itertools.permutations(sessions, 2):
            assert count_relation_metapaths(g, s1, s2) == oracles.metapath_walks(g, s1, s2)
            assert concept_reachable(g, s1, s2) == oracles.subset_reachable(g, s1, s2)


def _count_fixture(n_edges):
    # s1 = {a, b, c}, s2 = {x, y}; n distinct relation edges between the two sides
    pool = [(u, v, kind, prov) for u in "abc" for v in "xy"
            for kind, prov in ((EdgeKind.CAUSALITY, "Cause"), (EdgeKind.ASYNCHRONOUS, "Precedence"))]
    return _fixture({"s1": list("abc"), "s2": list("xy")}, rel=pool[:n_edges])[0]


def test_six_path_boundary():
    g5, g6 = _count_fixture(5), _count_fixture(6)
    assert count_relation_metapaths(g5, "session:s1", "session:s2") == 5
    assert select_session_pairs(g5) == []
    (p,) = select_session_pairs(g6)
    assert (p.relation_path_count, p.qualified_by) == (6, Qualifier.RELATION_COUNT)


def test_concept_only_qualification():
    g, _ = _fixture({"s1": ["a"], "s2": ["b"]}, concepts={"a": ["gift"], "b": ["gift", "party"]})
    (p,) = select_session_pairs(g)
    assert p.relation_path_count == 0 and p.qualified_by is Qualifier.CONCEPT_REACHABILITY


def _brute_select(g, min_paths=6):
    out = []
    for s1, s2 in itertools.combinations(g.node_ids(NodeKind.SESSION), 2):
        n = oracles.metapath_walks(g, s1, s2)
        r = oracles.subset_reachable(g, s1, s2)
        if n >= min_paths or r:
            out.append((s1, s2, n, r))
    return out


def test_select_matches_exhaustive_scan():
    for seed in range(40):
        g = oracles.random_rig(seed)
        for m in (1, 3, 6):
            got = [(p.s1, p.s2, p.relation_path_count, p.concept_reachable) for p in select_session_pairs(g, min_paths=m)]
            assert got == _brute_select(g, m)


def test_select_symmetric_scope():
    g = oracles.random_rig(3)
    sessions = g.node_ids(NodeKind.SESSION)
    fwd = select_session_pairs(g, itertools.permutations(sessions, 2), min_paths=1)
    assert fwd == select_session_pairs(g, min_paths=1)
    rev = select_session_pairs(g, [(b, a) for a, b in itertools.combinations(sessions, 2)], min_paths=1)
    assert rev == fwd


def test_item_graph_union_example():
    g, _ = _fixture({"s1": ["a"], "s2": ["b"]}, concepts={"a": ["gift"], "b": ["gift"]},
                    items={"s1": ["x", "y"], "s2": ["y", "z"]})
    pairs = select_session_pairs(g)
    ig = build_item_graph(g, pairs)
    assert ig.weights == {("x", "y"): 1, ("x", "z"): 1, ("y", "z"): 1}
    assert build_item_graph(g, pairs + pairs).weights == {k: 2 for k in ig.weights}
    assert len(build_item_graph(g, [])) == 0


def test_item_graph_recount_oracle():
    for seed in range(30):
        g = oracles.random_rig(seed)
        pairs = select_session_pairs(g, min_paths=2)
        items = {s: session_items(g, s) for s in g.node_ids(NodeKind.SESSION)}
        for variant in Variant:
            kept = filter_pairs(pairs, variant)
            ig = build_item_graph(g, pairs, variant)
            assert ig.weights == oracles.item_graph_recount(items, kept)
            assert all(a < b and w >= 1 for (a, b), w in ig.weights.items())


def test_variant_partition():
    g = oracles.random_rig(11)
    pairs = select_session_pairs(g, min_paths=1)
    full = set(filter_pairs(pairs, Variant.FULL))
    rel = set(filter_pairs(pairs, Variant.RELATION_ONLY))
    con = set(filter_pairs(pairs, Variant.CONCEPT_ONLY))
    both = {p for p in pairs if p.qualified_by is Qualifier.BOTH}
    assert full == rel | con and rel & con == both
    assert filter_pairs(pairs, Variant.EMPTY) == []
    w_full = build_item_graph(g, pairs, Variant.FULL).weights
    w_rel = build_item_graph(g, pairs, Variant.RELATION_ONLY).weights
    w_con = build_item_graph(g, pairs, Variant.CONCEPT_ONLY).weights
    w_both = build_item_graph(g, list(both), Variant.FULL).weights
    for k in set(w_full) | set(w_rel) | set(w_con):
        assert w_full.get(k, 0) == w_rel.get(k, 0) + w_con.get(k, 0) - w_both.get(k, 0)


def test_export_round_trip(tmp_path):
    rng = random.Random(0)
    ig = ItemGraph()
    while len(ig) < 1000:
        a, b = rng.sample(range(300), 2)
        ig.add(f"p{a:03d}", f"p{b:03d}", rng.randint(1, 5))
    path = tmp_path / "ig.tsv"
    export_item_graph(ig, path)
    back = load_item_graph(path)
    assert back.dumps() == ig.dumps() and back.weights == ig.weights
    assert path.read_text().splitlines()[0].count("\t") == 2


@pytest.mark.parametrize("line", ["a\ta\t1", "b\ta\t1", "a\tb\t0", "a\tb\tx", "a\tb", "a\tb\t1\na\tb\t2"])
def test_load_rejects(tmp_path, line):
    path = tmp_path / "bad.tsv"
    path.write_text(line + "\n")
    with pytest.raises(ItemGraphError):
        load_item_graph(path)


def test_pair_json_round_trip():
    p = SessionPairSelection("session:a", "session:b", 7, True, Qualifier.BOTH)
    assert SessionPairSelection.from_json(p.to_json()) == p


def test_item_graph_rejects_self_loop():
    with pytest.raises(ItemGraphError):
        ItemGraph().add("a", "a")
