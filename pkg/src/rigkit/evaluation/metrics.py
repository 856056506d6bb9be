"""Ranking metrics over 1-based positive ranks.

Each query is given as the list of ranks at which its positives appear in
the ranked candidate list. Queries with no positives are skipped.
"""
from __future__ import annotations

import logging
import math
from typing import Sequence

log = logging.getLogger(__name__)

Ranks = Sequence[Sequence[int]]

HIT_KS = (1, 3, 10)
CUTOFFS = (5, 10, 20, 50, 100)


def _queries(ranks: Ranks) -> list[list[int]]:
    out = []
    for q in ranks:
        q = sorted(int(r) for r in q)
        if not q:
            log.warning("query without positives skipped")
            continue
        if q[0] < 1:
            raise ValueError("ranks are 1-based")
        out.append(q)
    return out


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def mrr(ranks: Ranks) -> float:
    return _mean([1.0 / q[0] for q in _queries(ranks)])


def hit_at_k(ranks: Ranks, k: int) -> float:
    return _mean([1.0 if q[0] <= k else 0.0 for q in _queries(ranks)])


def recall_at_k(ranks: Ranks, k: int) -> float:
    return _mean([sum(r <= k for r in q) / len(q) for q in _queries(ranks)])


def dcg(ranks: Sequence[int], k: int) -> float:
    return sum(1.0 / math.log2(1 + r) for r in ranks if r <= k)


def ndcg_at_k(ranks: Ranks, k: int) -> float:
    vals = []
    for q in _queries(ranks):
        ideal = dcg(range(1, len(q) + 1), k)
        vals.append(dcg(q, k) / ideal)
    return _mean(vals)


def positive_ranks(ranked: Sequence[str], positives) -> list[int]:
    pos = set(positives)
    return [k for k, c in enumerate(ranked, 1) if c in pos]


def ranking_report(ranks: Ranks, times: Sequence[float] = (), cutoffs=CUTOFFS, hit_ks=HIT_KS) -> dict:
    report = {"n_queries": len(_queries(ranks)), "MRR": mrr(ranks)}
    for k in hit_ks:
        report[f"Hit@{k}"] = hit_at_k(ranks, k)
    for k in cutoffs:
        report[f"Recall@{k}"] = recall_at_k(ranks, k)
    for k in cutoffs:
        report[f"NDCG@{k}"] = ndcg_at_k(ranks, k)
    report["inference_time"] = _mean(list(times))
    return report
