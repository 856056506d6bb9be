"""Typed heterogeneous graph store for the relational intention graph.

Nodes are items, sessions, intentions and concepts. Six edge kinds connect
them; each kind fixes the node kinds allowed at its two endpoints.
"""
from __future__ import annotations

import enum
import hashlib
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class NodeKind(str, enum.Enum):
    ITEM = "Item"
    SESSION = "Session"
    INTENTION = "Intention"
    CONCEPT = "Concept"


class EdgeKind(str, enum.Enum):
    ITEM_TO_SESSION = "ItemToSession"
    SESSION_TO_INTENTION = "SessionToIntention"
    INTENTION_TO_CONCEPT = "IntentionToConcept"
    ASYNCHRONOUS = "Asynchronous"
    SYNCHRONOUS = "Synchronous"
    CAUSALITY = "Causality"


ENDPOINTS: dict[EdgeKind, tuple[NodeKind, NodeKind]] = {
    EdgeKind.ITEM_TO_SESSION: (NodeKind.ITEM, NodeKind.SESSION),
    EdgeKind.SESSION_TO_INTENTION: (NodeKind.SESSION, NodeKind.INTENTION),
    EdgeKind.INTENTION_TO_CONCEPT: (NodeKind.INTENTION, NodeKind.CONCEPT),
    EdgeKind.ASYNCHRONOUS: (NodeKind.INTENTION, NodeKind.INTENTION),
    EdgeKind.SYNCHRONOUS: (NodeKind.INTENTION, NodeKind.INTENTION),
    EdgeKind.CAUSALITY: (NodeKind.INTENTION, NodeKind.INTENTION),
}

RELATION_EDGE_KINDS = (EdgeKind.ASYNCHRONOUS, EdgeKind.SYNCHRONOUS, EdgeKind.CAUSALITY)

# provenance labels permitted on each intention-intention edge kind
PROVENANCE: dict[EdgeKind, frozenset[str]] = {
    EdgeKind.ASYNCHRONOUS: frozenset({"Precedence", "Succession"}),
    EdgeKind.SYNCHRONOUS: frozenset({"Simultaneous"}),
    EdgeKind.CAUSALITY: frozenset({"Cause", "Result"}),
}

_ID_PREFIX = {
    NodeKind.ITEM: "item",
    NodeKind.SESSION: "session",
    NodeKind.INTENTION: "intention",
    NodeKind.CONCEPT: "concept",
}

_WS = re.compile(r"\s+")


class GraphError(Exception):
    """Base class for graph failures."""


class SchemaError(GraphError, ValueError):
    pass


class ScoreRangeError(GraphError, ValueError):
    pass


class NodeNotFound(GraphError, KeyError):
    pass


class GraphParseError(GraphError, ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def normalize_text(text: str) -> str:
    """Lowercase, trim, collapse whitespace and strip trailing periods."""
    text = _WS.sub(" ", text.strip().lower())
    return text.rstrip(".").rstrip()


def _content_key(text: str) -> str:
    return hashlib.sha1(normalize_text(text).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    text: str
    attrs: dict[str, str] = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: EdgeKind
    score: float = 1.0
    provenance: str | None = None
    position: int | None = None

    @property
    def key(self) -> tuple:
        return (self.src, self.dst, self.kind.value, self.provenance or "", -1 if self.position is None else self.position)


@dataclass
class GraphStats:
    nodes: dict[str, int]
    edges: dict[str, int]
    total_nodes: int
    total_edges: int


class TypedGraph:
    """In-memory typed graph with adjacency indexed by (node, kind, direction).

    Intention and concept nodes are coalesced on normalized text. Items and
    sessions are keyed by an explicit id when given, otherwise by their
    normalized text. Re-adding an edge keeps the larger score.
    """

    def __init__(self) -> None:
        self._nodes: dict[str, Node] = {}
        self._by_text: dict[tuple[NodeKind, str], str] = {}
        self._edges: dict[tuple, Edge] = {}
        self._adj: dict[tuple[str, EdgeKind, str], set[tuple]] = defaultdict(set)

    # -- nodes -------------------------------------------------------------

    def add_node(
        self,
        kind: NodeKind | str,
        text: str,
        attrs: dict[str, str] | None = None,
        node_id: str | None = None,
    ) -> str:
        kind = NodeKind(kind)
        text = text if text is not None else ""
        if kind in (NodeKind.INTENTION, NodeKind.CONCEPT):
            if not normalize_text(text):
                raise SchemaError(f"{kind.value} node requires non-empty text")
            existing = self._by_text.get((kind, normalize_text(text)))
            if existing is not None:
                return existing
        if node_id is None:
            node_id = f"{_ID_PREFIX[kind]}:{_content_key(text)}"
        node_id = str(node_id)
        existing_node = self._nodes.get(node_id)
        if existing_node is not None:
            if existing_node.kind is not kind:
                raise SchemaError(f"node id {node_id!r} already used by a {existing_node.kind.value} node")
            if attrs:
                for k, v in attrs.items():
                    existing_node.attrs.setdefault(k, v)
            return node_id
        node = Node(node_id, kind, text, dict(attrs or {}))
        self._nodes[node_id] = node
        if kind in (NodeKind.INTENTION, NodeKind.CONCEPT):
            self._by_text[(kind, normalize_text(text))] = node_id
        return node_id

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NodeNotFound(node_id) from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def find(self, kind: NodeKind | str, text: str) -> str | None:
        """Return the id of an intention/concept node with this normalized text."""
        return self._by_text.get((NodeKind(kind), normalize_text(text)))

    def nodes(self, kind: NodeKind | str | None = None) -> list[Node]:
        out = sorted(self._nodes.values(), key=lambda n: n.id)
        if kind is not None:
            kind = NodeKind(kind)
            out = [n for n in out if n.kind is kind]
        return out

    def node_ids(self, kind: NodeKind | str | None = None) -> list[str]:
        return [n.id for n in self.nodes(kind)]

    # -- edges -------------------------------------------------------------

    def add_edge(
        self,
        src: str,
        dst: str,
        kind: EdgeKind | str,
        score: float = 1.0,
        provenance: str | None = None,
        position: int | None = None,
    ) -> Edge:
        kind = EdgeKind(kind)
        src_node, dst_node = self.node(src), self.node(dst)
        want_src, want_dst = ENDPOINTS[kind]
        if src_node.kind is not want_src or dst_node.kind is not want_dst:
            raise SchemaError(
                f"{kind.value} needs {want_src.value}->{want_dst.value}, "
                f"got {src_node.kind.value}->{dst_node.kind.value}"
            )
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ScoreRangeError(f"score {score} outside [0, 1]")
        if kind is EdgeKind.ITEM_TO_SESSION:
            if position is None or int(position) < 0:
                raise SchemaError("ItemToSession edge needs a non-negative position")
            position = int(position)
        elif position is not None:
            raise SchemaError(f"{kind.value} edge does not take a position")
        if kind in PROVENANCE:
            if provenance not in PROVENANCE[kind]:
                raise SchemaError(f"{kind.value} edge needs provenance in {sorted(PROVENANCE[kind])}")
            if src == dst:
                raise SchemaError("intention-intention edge cannot be a self-loop")
        elif provenance is not None:
            raise SchemaError(f"{kind.value} edge does not take a provenance label")
        if kind is EdgeKind.SYNCHRONOUS and src > dst:
            src, dst = dst, src

        edge = Edge(src, dst, kind, score, provenance, position)
        old = self._edges.get(edge.key)
        if old is not None:
            if old.score >= score:
                return old
            self._edges[edge.key] = edge
            return edge
        self._edges[edge.key] = edge
        self._adj[(src, kind, "out")].add(edge.key)
        self._adj[(dst, kind, "in")].add(edge.key)
        return edge

    def edges(self, kind: EdgeKind | str | None = None) -> list[Edge]:
        out = [self._edges[k] for k in sorted(self._edges)]
        if kind is not None:
            kind = EdgeKind(kind)
            out = [e for e in out if e.kind is kind]
        return out

    def num_edges(self) -> int:
        return len(self._edges)

    def neighbors(self, node_id: str, kind: EdgeKind | str, direction: str = "out") -> list[tuple[str, Edge]]:
        """Neighbors over edges of one kind, sorted by neighbor id.

        Synchronous edges are undirected and match in either direction.
        """
        if node_id not in self._nodes:
            raise NodeNotFound(node_id)
        kind = EdgeKind(kind)
        if direction not in ("out", "in", "both"):
            raise ValueError(f"bad direction {direction!r}")
        dirs = ("out", "in") if direction == "both" or kind is EdgeKind.SYNCHRONOUS else (direction,)
        found = {}
        for d in dirs:
            for key in self._adj.get((node_id, kind, d), ()):
                e = self._edges[key]
                other = e.dst if e.src == node_id else e.src
                found[key] = (other, e)
        return sorted(found.values(), key=lambda pair: (pair[0], pair[1].key))

    # -- whole-graph -------------------------------------------------------

    def stats(self) -> GraphStats:
        nodes = {k.value: 0 for k in NodeKind}
        edges = {k.value: 0 for k in EdgeKind}
        for n in self._nodes.values():
            nodes[n.kind.value] += 1
        for e in self._edges.values():
            edges[e.kind.value] += 1
        return GraphStats(nodes, edges, sum(nodes.values()), sum(edges.values()))

    def copy(self) -> "TypedGraph":
        return merge(self, TypedGraph())

    def iter_records(self) -> Iterator[dict]:
        for n in self.nodes():
            yield {"t": "node", "id": n.id, "kind": n.kind.value, "text": n.text, "attrs": dict(sorted(n.attrs.items()))}
        for e in self.edges():
            yield {
                "t": "edge",
                "src": e.src,
                "dst": e.dst,
                "kind": e.kind.value,
                "score": e.score,
                "prov": e.provenance,
                "pos": e.position,
            }

    def dumps(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n" for r in self.iter_records())


def merge(g1: TypedGraph, g2: TypedGraph) -> TypedGraph:
    """Union two graphs, coalescing nodes on text and max-merging edge scores."""
    out = TypedGraph()
    for g in (g1, g2):
        remap = {}
        for n in g.nodes():
            remap[n.id] = out.add_node(n.kind, n.text, n.attrs, node_id=n.id)
        for e in g.edges():
            out.add_edge(remap[e.src], remap[e.dst], e.kind, e.score, e.provenance, e.position)
    return out


def stats(g: TypedGraph) -> GraphStats:
    return g.stats()


def serialize(g: TypedGraph, path: str | Path) -> None:
    Path(path).write_text(g.dumps(), encoding="utf-8")


def loads(lines: Iterable[str]) -> TypedGraph:
    g = TypedGraph()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphParseError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise GraphParseError(lineno, "record is not an object")
        try:
            if rec.get("t") == "node":
                node_id = g.add_node(rec["kind"], rec["text"], rec.get("attrs") or {}, node_id=rec["id"])
                if node_id != rec["id"]:
                    raise GraphParseError(lineno, f"duplicate text for node {rec['id']!r}")
            elif rec.get("t") == "edge":
                for end in ("src", "dst"):
                    if not g.has_node(rec[end]):
                        raise GraphParseError(lineno, f"edge references undeclared node {rec[end]!r}")
                g.add_edge(rec["src"], rec["dst"], rec["kind"], rec.get("score", 1.0), rec.get("prov"), rec.get("pos"))
            else:
                raise GraphParseError(lineno, f"unknown record type {rec.get('t')!r}")
        except GraphParseError:
            raise
        except KeyError as exc:
            raise GraphParseError(lineno, f"missing field {exc}") from None
        except (GraphError, ValueError, TypeError) as exc:
            raise GraphParseError(lineno, str(exc)) from None
    return g


def deserialize(path: str | Path) -> TypedGraph:
    with open(path, encoding="utf-8") as fh:
        return loads(fh)
