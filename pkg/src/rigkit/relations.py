"""Intention-intention relation classification.

Candidate pairs are rendered into five discourse assertions, scored by a
plausibility backend, and kept as typed edges when the score clears the
threshold (strictly).
"""
from __future__ import annotations

import enum
import itertools
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .backends import BackendError, Scorer
from .graph import Edge, EdgeKind, NodeKind, TypedGraph

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.9


class RelationType(str, enum.Enum):
    PRECEDENCE = "Precedence"
    SUCCESSION = "Succession"
    SIMULTANEOUS = "Simultaneous"
    CAUSE = "Cause"
    RESULT = "Result"

    @property
    def edge_kind(self) -> EdgeKind:
        return _EDGE_KIND[self]


_EDGE_KIND = {
    RelationType.PRECEDENCE: EdgeKind.ASYNCHRONOUS,
    RelationType.SUCCESSION: EdgeKind.ASYNCHRONOUS,
    RelationType.SIMULTANEOUS: EdgeKind.SYNCHRONOUS,
    RelationType.CAUSE: EdgeKind.CAUSALITY,
    RelationType.RESULT: EdgeKind.CAUSALITY,
}

TEMPLATES = {
    RelationType.SIMULTANEOUS: "People {a}, and simultaneously, they {b}.",
    RelationType.SUCCESSION: "People {a} usually after they {b}.",
    RelationType.PRECEDENCE: "People {a} usually before they {b}.",
    RelationType.CAUSE: "People {a} because they {b}.",
    RelationType.RESULT: "People {a}, as a result, they {b}.",
}

ASYMMETRIC = (RelationType.PRECEDENCE, RelationType.SUCCESSION, RelationType.CAUSE, RelationType.RESULT)


@dataclass
class Assertion:
    i1: str
    i2: str
    relation: RelationType
    text: str
    score: float | None = None

    def __post_init__(self) -> None:
        if self.i1 == self.i2:
            raise ValueError("assertion needs two distinct intentions")
        if not self.text:
            raise ValueError("empty assertion text")


@dataclass(frozen=True)
class PairPolicy:
    include_within_session: bool = True
    include_shared_concept: bool = True
    max_pairs_per_intention: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_pairs_per_intention < 1:
            raise ValueError("max_pairs_per_intention must be positive")


def _clause(text: str) -> str:
    text = text.strip().rstrip(".").strip()
    return text[:1].lower() + text[1:]


def render_assertion(i1_text: str, i2_text: str, relation: RelationType | str) -> str:
    if not i1_text.strip() or not i2_text.strip():
        raise ValueError("intention texts must be non-empty")
    return TEMPLATES[RelationType(relation)].format(a=_clause(i1_text), b=_clause(i2_text))


def candidate_pairs(g: TypedGraph, policy: PairPolicy = PairPolicy()) -> list[tuple[str, str]]:
    """Unordered intention pairs worth classifying, as sorted (low, high) tuples.

    Pairs come from intentions sharing a session and/or a concept. Visiting
    the pairs in a seeded random order and accepting a pair only while both
    endpoints are under the cap keeps every intention within
    ``max_pairs_per_intention`` partners.
    """
    pairs: set[tuple[str, str]] = set()
    if policy.include_within_session:
        for s in g.node_ids(NodeKind.SESSION):
            members = [i for i, _ in g.neighbors(s, EdgeKind.SESSION_TO_INTENTION, "out")]
            pairs.update(itertools.combinations(members, 2))
    if policy.include_shared_concept:
        for c in g.node_ids(NodeKind.CONCEPT):
            members = [i for i, _ in g.neighbors(c, EdgeKind.INTENTION_TO_CONCEPT, "in")]
            pairs.update(itertools.combinations(members, 2))
    ordered = sorted(pairs)
    rng = np.random.default_rng(policy.seed)
    kept = []
    load: Counter[str] = Counter()
    cap = policy.max_pairs_per_intention
    for idx in rng.permutation(len(ordered)):
        a, b = ordered[idx]
        if load[a] < cap and load[b] < cap:
            kept.append((a, b))
            load[a] += 1
            load[b] += 1
    return sorted(kept)


def pair_assertions(g: TypedGraph, i1: str, i2: str) -> list[Assertion]:
    """All assertions scored for one pair: five relations plus swapped asymmetric ones."""
    t1, t2 = g.node(i1).text, g.node(i2).text
    out = [Assertion(i1, i2, r, render_assertion(t1, t2, r)) for r in RelationType]
    out += [Assertion(i2, i1, r, render_assertion(t2, t1, r)) for r in ASYMMETRIC]
    return out


def assertion_edge(a: Assertion) -> tuple[str, str, EdgeKind]:
    """(src, dst, kind) an accepted assertion becomes.

    Succession(x, y) says x happens after y, so the time-ordered edge runs
    y -> x. Cause edges point from the explained intention to its reason.
    """
    if a.relation is RelationType.SUCCESSION:
        return a.i2, a.i1, EdgeKind.ASYNCHRONOUS
    return a.i1, a.i2, a.relation.edge_kind


def classify_pair(
    g: TypedGraph, i1: str, i2: str, scorer: Scorer, threshold: float = DEFAULT_THRESHOLD, log_rows: list | None = None
) -> list[Edge]:
    """Score all assertions for a pair and add the edges whose score exceeds ``threshold``."""
    return _classify(g, i1, i2, scorer, threshold, log_rows) or []


def _classify(g, i1, i2, scorer, threshold, log_rows) -> list[Edge] | None:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    for i in (i1, i2):
        if g.node(i).kind is not NodeKind.INTENTION:
            raise ValueError(f"{i!r} is not an intention")
    assertions = pair_assertions(g, i1, i2)
    try:
        for a in assertions:
            a.score = float(scorer.plausibility(a.text))
    except BackendError as exc:
        log.error("pair (%s, %s) skipped: %s", i1, i2, exc)
        if log_rows is not None:
            log_rows.append({"i1": i1, "i2": i2, "relation": None, "score": None, "accepted": False, "error": str(exc)})
        return None
    edges = []
    for a in assertions:
        accepted = a.score > threshold
        if log_rows is not None:
            log_rows.append({"i1": a.i1, "i2": a.i2, "relation": a.relation.value, "score": a.score, "accepted": accepted})
        if accepted:
            src, dst, kind = assertion_edge(a)
            edges.append(g.add_edge(src, dst, kind, a.score, provenance=a.relation.value))
    return edges


def build_relations(
    g: TypedGraph,
    policy: PairPolicy,
    scorer: Scorer,
    threshold: float = DEFAULT_THRESHOLD,
    log_rows: list | None = None,
) -> dict:
    """Classify every candidate pair; returns accepted-edge counts per relation."""
    counts = {r.value: 0 for r in RelationType}
    pairs = candidate_pairs(g, policy)
    skipped = 0
    for i1, i2 in pairs:
        edges = _classify(g, i1, i2, scorer, threshold, log_rows)
        if edges is None:
            skipped += 1
            continue
        for e in edges:
            counts[e.provenance] += 1
    return {"pairs": len(pairs), "accepted": counts, "skipped_pairs": skipped, "threshold": threshold}


def relation_edges(g: TypedGraph) -> list[Edge]:
    out = []
    for kind in (EdgeKind.ASYNCHRONOUS, EdgeKind.SYNCHRONOUS, EdgeKind.CAUSALITY):
        out.extend(g.edges(kind))
    return out


def intentions_by_session(g: TypedGraph) -> dict[str, list[str]]:
    out = defaultdict(list)
    for e in g.edges(EdgeKind.SESSION_TO_INTENTION):
        out[e.src].append(e.dst)
    return dict(out)
