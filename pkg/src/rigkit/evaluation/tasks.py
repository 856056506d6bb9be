"""Intrinsic ranking tasks built from the graph and an embedding ranker."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..graph import EdgeKind, NodeKind, TypedGraph
from .metrics import positive_ranks, ranking_report

log = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.8, 0.1, 0.1)


class SplitError(ValueError):
    pass


@dataclass
class DataSplit:
    train: list[str]
    valid: list[str]
    test: list[str]
    edges: dict[str, list[str]]
    seed: int

    def part(self, name: str) -> list[str]:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]


@dataclass
class RankingInstance:
    query_id: str
    query_items: list[str]
    query_texts: list[str]
    candidates: list[tuple[str, str]]
    positives: set[str]
    seed: int = 0

    def __post_init__(self) -> None:
        ids = [c for c, _ in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate candidates for {self.query_id}")
        if not self.positives <= set(ids):
            raise ValueError(f"positives of {self.query_id} missing from candidates")

    @property
    def candidate_ids(self) -> list[str]:
        return [c for c, _ in self.candidates]

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "query_items": self.query_items,
            "query_texts": self.query_texts,
            "candidates": [list(c) for c in self.candidates],
            "positives": sorted(self.positives),
            "seed": self.seed,
        }


def split_keys(keys: Iterable[str], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0) -> tuple[list, list, list]:
    ratios = tuple(ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios {ratios} must be three non-negative numbers summing to 1")
    keys = sorted(set(keys))
    if len(keys) < 10:
        raise SplitError(f"need at least 10 keys to split, got {len(keys)}")
    perm = np.random.default_rng(seed).permutation(len(keys))
    shuffled = [keys[i] for i in perm]
    n_train = int(round(ratios[0] * len(keys)))
    n_valid = int(round(ratios[1] * len(keys)))
    train = sorted(shuffled[:n_train])
    valid = sorted(shuffled[n_train : n_train + n_valid])
    test = sorted(shuffled[n_train + n_valid :])
    return train, valid, test


def split_edges(
    g: TypedGraph, edge_kind: EdgeKind | str, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> DataSplit:
    """Partition the source nodes of one edge kind; each source keeps all its edges."""
    edges: dict[str, list[str]] = {}
    for e in g.edges(edge_kind):
        edges.setdefault(e.src, []).append(e.dst)
    train, valid, test = split_keys(edges, ratios, seed)
    return DataSplit(train, valid, test, {k: sorted(v) for k, v in edges.items()}, seed)


def product_intention_pairs(g: TypedGraph) -> dict[str, list[str]]:
    """Each item inherits the intentions of every session it appears in."""
    out: dict[str, set[str]] = {}
    for e in g.edges(EdgeKind.ITEM_TO_SESSION):
        ints = [i for i, _ in g.neighbors(e.dst, EdgeKind.SESSION_TO_INTENTION, "out")]
        if ints:
            out.setdefault(e.src, set()).update(ints)
    return {k: sorted(v) for k, v in sorted(out.items())}


def split_products(g: TypedGraph, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0) -> DataSplit:
    pairs = product_intention_pairs(g)
    train, valid, test = split_keys(pairs, ratios, seed)
    return DataSplit(train, valid, test, pairs, seed)


def _session_items(g: TypedGraph, s: str) -> tuple[list[str], list[str]]:
    rows = sorted((e.position, i) for i, e in g.neighbors(s, EdgeKind.ITEM_TO_SESSION, "in"))
    ids = [i for _, i in rows]
    return ids, [g.node(i).text for i in ids]


def _sample(rng: np.random.Generator, pool: list[str], k: int) -> list[str]:
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in sorted(idx)]


def make_intention_task(
    g: TypedGraph, split: DataSplit, n_negatives: int = 30, seed: int = 0, part: str = "test",
    min_pos: int = 2, max_pos: int = 4,
) -> list[RankingInstance]:
    """Per session: its 2-4 intentions plus ``n_negatives`` unlinked intentions."""
    rng = np.random.default_rng(seed)
    universe = g.node_ids(NodeKind.INTENTION)
    out = []
    for s in split.part(part):
        positives = split.edges.get(s, [])
        if not min_pos <= len(positives) <= max_pos:
            log.info("session %s skipped: %d positives", s, len(positives))
            continue
        pos = set(positives)
        pool = [i for i in universe if i not in pos]
        if len(pool) < n_negatives:
            log.warning("session %s skipped: only %d negatives available", s, len(pool))
            continue
        cands = sorted(pos | set(_sample(rng, pool, n_negatives)))
        item_ids, titles = _session_items(g, s)
        out.append(RankingInstance(s, item_ids, titles, [(c, g.node(c).text) for c in cands], pos, seed))
    return out


def make_concept_task(
    g: TypedGraph, split: DataSplit, n_candidates: int = 500, seed: int = 0, part: str = "test"
) -> list[RankingInstance]:
    """Per intention: its concepts padded with sampled negatives to ``n_candidates``."""
    rng = np.random.default_rng(seed)
    universe = g.node_ids(NodeKind.CONCEPT)
    if len(universe) < n_candidates:
        log.warning("only %d concepts in graph; pools use all of them", len(universe))
    out = []
    for i in split.part(part):
        pos = set(split.edges.get(i, []))
        if not pos:
            continue
        pool = [c for c in universe if c not in pos]
        k = max(0, min(n_candidates - len(pos), len(pool)))
        cands = sorted(pos | set(_sample(rng, pool, k)))
        text = g.node(i).text
        out.append(RankingInstance(i, [i], [text], [(c, g.node(c).text) for c in cands], pos, seed))
    return out


def make_product_recovery_task(
    g: TypedGraph, split: DataSplit, n_negatives: int = 10, seed: int = 0, part: str = "test"
) -> list[RankingInstance]:
    """One instance per (product, intention) pair: the intention against 10 unlinked ones."""
    rng = np.random.default_rng(seed)
    universe = g.node_ids(NodeKind.INTENTION)
    out = []
    for p in split.part(part):
        linked = set(split.edges.get(p, []))
        pool = [i for i in universe if i not in linked]
        if len(pool) < n_negatives:
            log.warning("product %s skipped: only %d negatives available", p, len(pool))
            continue
        title = g.node(p).text
        for i in sorted(linked):
            cands = sorted({i} | set(_sample(rng, pool, n_negatives)))
            out.append(RankingInstance(f"{p}|{i}", [p], [title], [(c, g.node(c).text) for c in cands], {i}, seed))
    return out


# --------------------------------------------------------------------------
# ranking


def cosine_order(query: np.ndarray, cand_ids: Sequence[str], cand_vecs: np.ndarray) -> list[str]:
    """Candidate ids by descending cosine to ``query``, ties by ascending id."""
    q = np.asarray(query, dtype=np.float64)
    M = np.asarray(cand_vecs, dtype=np.float64)
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(M, axis=1)
    denom = np.where(norms * qn > 0, norms * qn, 1.0)
    sims = (M @ q) / denom
    return [cand_ids[k] for k in sorted(range(len(cand_ids)), key=lambda k: (-sims[k], cand_ids[k]))]


def rank_by_embedding(
    instance: RankingInstance,
    embed: Callable[[str], np.ndarray],
    session_encoder: Callable[[RankingInstance], np.ndarray] | None = None,
) -> list[str]:
    if session_encoder is not None:
        query = session_encoder(instance)
    else:
        query = np.mean([embed(t) for t in instance.query_texts], axis=0)
    vecs = np.stack([embed(text) for _, text in instance.candidates])
    return cosine_order(query, instance.candidate_ids, vecs)


def evaluate_ranker(instances: Sequence[RankingInstance], ranker: Callable[[RankingInstance], list[str]]) -> dict:
    ranks, times = [], []
    for inst in instances:
        t0 = time.perf_counter()
        ordered = ranker(inst)
        times.append(time.perf_counter() - t0)
        ranks.append(positive_ranks(ordered, inst.positives))
    return ranking_report(ranks, times)


def write_instances(instances: Iterable[RankingInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")
