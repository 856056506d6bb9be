"""Meta-path session pairing and the weighted item co-occurrence graph."""
from __future__ import annotations

import enum
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .graph import RELATION_EDGE_KINDS, EdgeKind, GraphError, NodeKind, TypedGraph

MIN_RELATION_PATHS = 6


class Qualifier(str, enum.Enum):
    RELATION_COUNT = "RelationCount"
    CONCEPT_REACHABILITY = "ConceptReachability"
    BOTH = "Both"


class Variant(str, enum.Enum):
    FULL = "Full"
    CONCEPT_ONLY = "ConceptOnly"
    RELATION_ONLY = "RelationOnly"
    EMPTY = "Empty"


_VARIANT_KEEPS = {
    Variant.FULL: {Qualifier.RELATION_COUNT, Qualifier.CONCEPT_REACHABILITY, Qualifier.BOTH},
    Variant.RELATION_ONLY: {Qualifier.RELATION_COUNT, Qualifier.BOTH},
    Variant.CONCEPT_ONLY: {Qualifier.CONCEPT_REACHABILITY, Qualifier.BOTH},
    Variant.EMPTY: set(),
}


@dataclass(frozen=True)
class SessionPairSelection:
    s1: str
    s2: str
    relation_path_count: int
    concept_reachable: bool
    qualified_by: Qualifier

    def to_json(self) -> dict:
        return {
            "s1": self.s1,
            "s2": self.s2,
            "relation_path_count": self.relation_path_count,
            "concept_reachable": self.concept_reachable,
            "qualified_by": self.qualified_by.value,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SessionPairSelection":
        return cls(rec["s1"], rec["s2"], int(rec["relation_path_count"]), bool(rec["concept_reachable"]),
                   Qualifier(rec["qualified_by"]))


class ItemGraphError(ValueError):
    pass


@dataclass
class ItemGraph:
    """Symmetric weighted item graph; weights keyed by (a, b) with a < b."""

    weights: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def items(self) -> list[str]:
        return sorted({x for pair in self.weights for x in pair})

    def weight(self, a: str, b: str) -> int:
        if a > b:
            a, b = b, a
        return self.weights.get((a, b), 0)

    def add(self, a: str, b: str, w: int = 1) -> None:
        if a == b:
            raise ItemGraphError(f"self-loop on {a!r}")
        if a > b:
            a, b = b, a
        self.weights[(a, b)] = self.weights.get((a, b), 0) + w

    def __len__(self) -> int:
        return len(self.weights)

    def dumps(self) -> str:
        return "".join(f"{a}\t{b}\t{w}\n" for (a, b), w in sorted(self.weights.items()))


# --------------------------------------------------------------------------
# per-session views


def session_intentions(g: TypedGraph, s: str) -> set[str]:
    return {i for i, _ in g.neighbors(s, EdgeKind.SESSION_TO_INTENTION, "out")}


def session_concepts(g: TypedGraph, s: str) -> set[str]:
    out = set()
    for i in session_intentions(g, s):
        out.update(c for c, _ in g.neighbors(i, EdgeKind.INTENTION_TO_CONCEPT, "out"))
    return out


def session_items(g: TypedGraph, s: str) -> list[str]:
    """Item ids of a session in position order, without the ``item:`` prefix."""
    rows = sorted((e.position, i) for i, e in g.neighbors(s, EdgeKind.ITEM_TO_SESSION, "in"))
    seen, out = set(), []
    for _, i in rows:
        if i not in seen:
            seen.add(i)
            out.append(i.removeprefix("item:"))
    return out


def _check_sessions(g: TypedGraph, s1: str, s2: str) -> None:
    for s in (s1, s2):
        if g.node(s).kind is not NodeKind.SESSION:
            raise GraphError(f"{s!r} is not a session")
    if s1 == s2:
        raise ValueError("session pair needs two distinct sessions")


def _count_paths(rel_adj: dict[str, list[tuple[str, tuple]]], i1: Iterable[str], i2: set[str]) -> int:
    keys = set()
    for i in i1:
        for other, key in rel_adj.get(i, ()):
            if other in i2:
                keys.add((i, key, other))
    return len(keys)


def _reachable(c1: frozenset | set, c2: frozenset | set) -> bool:
    return bool((c1 and c1 <= c2) or (c2 and c2 <= c1))


def count_relation_metapaths(g: TypedGraph, s1: str, s2: str) -> int:
    """Distinct (i1, edge, i2) walks with i1 an intention of ``s1`` and i2 of ``s2``.

    Edges are traversed in either direction. An undirected Synchronous edge
    is one edge, so it yields one triple per ordered endpoint assignment,
    the same as a directed edge.
    """
    _check_sessions(g, s1, s2)
    i2 = session_intentions(g, s2)
    keys = set()
    for i in session_intentions(g, s1):
        for kind in RELATION_EDGE_KINDS:
            for other, e in g.neighbors(i, kind, "both"):
                if other in i2:
                    keys.add((i, e.key, other))
    return len(keys)


def concept_reachable(g: TypedGraph, s1: str, s2: str) -> bool:
    """Concept set of one session is non-empty and contained in the other's."""
    _check_sessions(g, s1, s2)
    return _reachable(session_concepts(g, s1), session_concepts(g, s2))


def _qualifier(count: int, reachable: bool, min_paths: int) -> Qualifier | None:
    by_count = count >= min_paths
    if by_count and reachable:
        return Qualifier.BOTH
    if by_count:
        return Qualifier.RELATION_COUNT
    if reachable:
        return Qualifier.CONCEPT_REACHABILITY
    return None


class _Index:
    """Read-only lookups over a frozen graph for bulk pair selection."""

    def __init__(self, g: TypedGraph):
        self.intentions: dict[str, frozenset[str]] = {}
        for s in g.node_ids(NodeKind.SESSION):
            self.intentions[s] = frozenset()
        by_s = defaultdict(set)
        for e in g.edges(EdgeKind.SESSION_TO_INTENTION):
            by_s[e.src].add(e.dst)
        for s, ints in by_s.items():
            self.intentions[s] = frozenset(ints)
        concepts = defaultdict(set)
        for e in g.edges(EdgeKind.INTENTION_TO_CONCEPT):
            concepts[e.src].add(e.dst)
        self.concepts_of_intention = {i: frozenset(c) for i, c in concepts.items()}
        self.rel_adj: dict[str, list[tuple[str, tuple]]] = defaultdict(list)
        for kind in RELATION_EDGE_KINDS:
            for e in g.edges(kind):
                self.rel_adj[e.src].append((e.dst, e.key))
                self.rel_adj[e.dst].append((e.src, e.key))

    def concepts(self, ints: frozenset[str]) -> frozenset[str]:
        out: set[str] = set()
        for i in ints:
            out |= self.concepts_of_intention.get(i, frozenset())
        return frozenset(out)


def select_session_pairs(
    g: TypedGraph,
    candidate_scope: Iterable[tuple[str, str]] | None = None,
    min_paths: int = MIN_RELATION_PATHS,
) -> list[SessionPairSelection]:
    """Session pairs that share ``min_paths`` relation meta-paths or are concept-reachable.

    Without an explicit scope, candidates are discovered by traversal: two
    sessions are examined only when they share a concept or are joined by at
    least one relation edge. Both tests depend only on the sessions'
    intention sets, so they are evaluated once per distinct pair of sets.
    """
    idx = _Index(g)
    sig_sessions: dict[frozenset, list[str]] = defaultdict(list)
    for s, ints in idx.intentions.items():
        if ints:
            sig_sessions[ints].append(s)
    sig_concepts = {sig: idx.concepts(sig) for sig in sig_sessions}
    cache: dict[tuple[frozenset, frozenset], Qualifier | None] = {}
    counts: dict[tuple[frozenset, frozenset], tuple[int, bool]] = {}

    def judge(a: frozenset, b: frozenset):
        key = (a, b)
        if key not in counts:
            n = _count_paths(idx.rel_adj, a, b)
            r = _reachable(sig_concepts[a], sig_concepts[b])
            counts[key] = counts[(b, a)] = (n, r)
            cache[key] = cache[(b, a)] = _qualifier(n, r, min_paths)
        return counts[key], cache[key]

    out: list[SessionPairSelection] = []
    if candidate_scope is not None:
        seen = set()
        for s1, s2 in candidate_scope:
            if s1 == s2:
                continue
            s1, s2 = min(s1, s2), max(s1, s2)
            if (s1, s2) in seen:
                continue
            seen.add((s1, s2))
            _check_sessions(g, s1, s2)
            a, b = idx.intentions[s1], idx.intentions[s2]
            if not a or not b:
                continue
            (n, r), q = judge(a, b)
            if q is not None:
                out.append(SessionPairSelection(s1, s2, n, r, q))
        return sorted(out, key=lambda p: (p.s1, p.s2))

    # candidate signature pairs by traversal
    sigs_by_concept: dict[str, set[frozenset]] = defaultdict(set)
    sigs_by_intention: dict[str, set[frozenset]] = defaultdict(set)
    for sig, cons in sig_concepts.items():
        for c in cons:
            sigs_by_concept[c].add(sig)
        for i in sig:
            sigs_by_intention[i].add(sig)
    order = {sig: k for k, sig in enumerate(sorted(sig_sessions, key=lambda s: sorted(s)))}
    for a in sorted(sig_sessions, key=order.__getitem__):
        partners: set[frozenset] = set()
        for c in sig_concepts[a]:
            partners |= sigs_by_concept[c]
        for i in a:
            for other, _ in idx.rel_adj.get(i, ()):
                partners |= sigs_by_intention.get(other, set())
        for b in partners:
            if order[b] < order[a]:
                continue
            (n, r), q = judge(a, b)
            if q is None:
                continue
            if a == b:
                pairs = itertools.combinations(sorted(sig_sessions[a]), 2)
            else:
                pairs = itertools.product(sig_sessions[a], sig_sessions[b])
            for s1, s2 in pairs:
                if s1 > s2:
                    s1, s2 = s2, s1
                out.append(SessionPairSelection(s1, s2, n, r, q))
    out.sort(key=lambda p: (p.s1, p.s2))
    return out


def filter_pairs(pairs: Iterable[SessionPairSelection], variant: Variant | str) -> list[SessionPairSelection]:
    keep = _VARIANT_KEEPS[Variant(variant)]
    return [p for p in pairs if p.qualified_by in keep]


def build_item_graph(
    g: TypedGraph, pairs: Iterable[SessionPairSelection], variant: Variant | str = Variant.FULL
) -> ItemGraph:
    """Every unordered item pair in the union of a retained session pair gains weight 1."""
    kept = filter_pairs(pairs, variant)
    if not kept:
        return ItemGraph()
    sessions = sorted({s for p in kept for s in (p.s1, p.s2)})
    items_of = {s: session_items(g, s) for s in sessions}
    catalog = sorted({i for s in sessions for i in items_of[s]})
    col = {item: k for k, item in enumerate(catalog)}
    row = {s: k for k, s in enumerate(sessions)}

    # session-item incidence, then one union-indicator row per retained pair
    r_idx, c_idx = [], []
    for s in sessions:
        for item in items_of[s]:
            r_idx.append(row[s])
            c_idx.append(col[item])
    X = sp.csr_matrix((np.ones(len(r_idx), dtype=np.int64), (r_idx, c_idx)), shape=(len(sessions), len(catalog)))
    left = X[[row[p.s1] for p in kept]]
    right = X[[row[p.s2] for p in kept]]
    U = left + right
    U.data = np.minimum(U.data, 1)
    W = (U.T @ U).tocoo()

    ig = ItemGraph()
    for a, b, w in zip(W.row, W.col, W.data):
        if a < b and w > 0:
            ig.weights[(catalog[a], catalog[b])] = int(w)
    ig.weights = dict(sorted(ig.weights.items()))
    return ig


def export_item_graph(ig: ItemGraph, path: str | Path) -> None:
    Path(path).write_text(ig.dumps(), encoding="utf-8")


def load_item_graph(path: str | Path) -> ItemGraph:
    ig = ItemGraph()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ItemGraphError(f"line {lineno}: expected 3 tab-separated fields")
            a, b, w = parts
            if a == b:
                raise ItemGraphError(f"line {lineno}: self-loop on {a!r}")
            if a > b:
                raise ItemGraphError(f"line {lineno}: endpoints not in canonical order")
            try:
                weight = int(w)
            except ValueError:
                raise ItemGraphError(f"line {lineno}: weight {w!r} is not an integer") from None
            if weight < 1:
                raise ItemGraphError(f"line {lineno}: weight must be >= 1")
            if (a, b) in ig.weights:
                raise ItemGraphError(f"line {lineno}: duplicate edge {a!r}-{b!r}")
            ig.weights[(a, b)] = weight
    return ig
