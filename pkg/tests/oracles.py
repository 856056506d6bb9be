"""Brute-force reference implementations used by the tests.

These are written from the definitions, not from the package code, and favour
obviousness over speed.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np

RELATION_KINDS = ("Asynchronous", "Synchronous", "Causality")


def graph_tables(g):
    """Plain dict/list view of a graph via its serialized records."""
    nodes, edges = {}, []
    for rec in g.iter_records():
        if rec["t"] == "node":
            nodes[rec["id"]] = rec
        else:
            edges.append(rec)
    return nodes, edges


def intentions_of(edges, s):
    return {e["dst"] for e in edges if e["kind"] == "SessionToIntention" and e["src"] == s}


def concepts_of(edges, s):
    ints = intentions_of(edges, s)
    return {e["dst"] for e in edges if e["kind"] == "IntentionToConcept" and e["src"] in ints}


def metapath_walks(g, s1, s2):
    """Enumerate session->intention->(relation edge)->intention->session walks as triples."""
    _, edges = graph_tables(g)
    rel = [e for e in edges if e["kind"] in RELATION_KINDS]
    out = set()
    for i1 in intentions_of(edges, s1):
        for i2 in intentions_of(edges, s2):
            for k, e in enumerate(rel):
                if (e["src"], e["dst"]) in ((i1, i2), (i2, i1)):
                    out.add((i1, k, i2))
    return len(out)


def subset_reachable(g, s1, s2):
    _, edges = graph_tables(g)
    c1, c2 = concepts_of(edges, s1), concepts_of(edges, s2)
    if c1 and c1.issubset(c2):
        return True
    return bool(c2) and c2.issubset(c1)


def item_graph_recount(session_items: dict[str, list[str]], pairs):
    """weight(a, b) = number of pairs whose item union contains both a and b."""
    unions = [set(session_items[p.s1]) | set(session_items[p.s2]) for p in pairs]
    items = sorted(set().union(*unions)) if unions else []
    out = {}
    for a, b in itertools.combinations(items, 2):
        w = sum(1 for u in unions if a in u and b in u)
        if w:
            out[(a, b)] = w
    return out


# ---------------------------------------------------------------- metrics


def first_rank(ranked, positives):
    for pos, c in enumerate(ranked, 1):
        if c in positives:
            return pos
    return None


def brute_metrics(rankings, k):
    """(MRR, Hit@k, Recall@k, NDCG@k) as Fractions/floats from full rankings."""
    rr, hit, rec, ndcg = [], [], [], []
    for ranked, positives in rankings:
        f = first_rank(ranked, positives)
        rr.append(Fraction(1, f) if f else Fraction(0))
        top = ranked[:k]
        n_in = sum(1 for c in top if c in positives)
        hit.append(1 if n_in else 0)
        rec.append(Fraction(n_in, len(positives)))
        dcg = sum(1.0 / math.log2(1 + p) for p, c in enumerate(top, 1) if c in positives)
        idcg = sum(1.0 / math.log2(1 + p) for p in range(1, min(k, len(positives)) + 1))
        ndcg.append(dcg / idcg)
    n = len(rankings)
    return (float(sum(rr) / n), float(Fraction(sum(hit), n)), float(sum(rec) / n), sum(ndcg) / n)


def naive_ngram_diversity(corpus, n):
    tokens = " ".join(corpus).lower().split()
    grams = [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]
    if not grams:
        return None
    return len(Counter(grams)) / len(grams)


# ------------------------------------------------------------------ numeric


def dense_convolve(E0, A, L):
    E0 = np.asarray(E0, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    total = np.zeros_like(E0)
    for layer in range(L + 1):
        total += np.linalg.matrix_power(A, layer) @ E0
    return total


def cosine_sort(query, cands):
    """cands: list of (id, vec). Descending cosine, ties by id."""
    q = np.asarray(query, dtype=np.float64)
    scored = []
    for cid, v in cands:
        v = np.asarray(v, dtype=np.float64)
        sim = float(q @ v) / (np.linalg.norm(q) * np.linalg.norm(v))
        scored.append((-sim, cid))
    return [cid for _, cid in sorted(scored)]


def random_rig(seed: int, max_nodes: int = 50):
    """Random graph with items, sessions, intentions, concepts and relation edges (<= max_nodes nodes)."""
    import random

    from rigkit.graph import EdgeKind, NodeKind, TypedGraph

    rng = random.Random(seed)
    n_s, n_i, n_c = rng.randint(3, 8), rng.randint(3, 12), rng.randint(1, 6)
    n_items = min(rng.randint(3, 20), max_nodes - n_s - n_i - n_c)
    g = TypedGraph()
    items = [g.add_node(NodeKind.ITEM, f"item {k}", node_id=f"item:p{k}") for k in range(n_items)]
    sessions = [g.add_node(NodeKind.SESSION, f"s{k}", node_id=f"session:s{k}") for k in range(n_s)]
    ints = [g.add_node(NodeKind.INTENTION, f"intention {k}") for k in range(n_i)]
    cons = [g.add_node(NodeKind.CONCEPT, f"concept {k}") for k in range(n_c)]
    for s in sessions:
        for pos, it in enumerate(rng.sample(items, rng.randint(1, min(4, len(items))))):
            g.add_edge(it, s, EdgeKind.ITEM_TO_SESSION, position=pos)
        for i in rng.sample(ints, rng.randint(0, min(4, len(ints)))):
            g.add_edge(s, i, EdgeKind.SESSION_TO_INTENTION)
    for i in ints:
        for c in rng.sample(cons, rng.randint(0, min(2, len(cons)))):
            g.add_edge(i, c, EdgeKind.INTENTION_TO_CONCEPT)
    provs = {EdgeKind.ASYNCHRONOUS: ["Precedence", "Succession"], EdgeKind.SYNCHRONOUS: ["Simultaneous"],
             EdgeKind.CAUSALITY: ["Cause", "Result"]}
    for _ in range(rng.randint(0, 3 * n_i)):
        a, b = rng.sample(ints, 2)
        kind = rng.choice(list(provs))
        g.add_edge(a, b, kind, rng.uniform(0.9, 1.0), provenance=rng.choice(provs[kind]))
    return g
