import math
import random

import pytest

from rigkit.evaluation.diversity import diversity_profile, ngram_diversity
from rigkit.evaluation.metrics import hit_at_k, mrr, ndcg_at_k, positive_ranks, ranking_report, recall_at_k

import oracles


def random_rankings(n, seed):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        m = rng.randint(1, 60)
        cands = [f"c{k}" for k in range(m)]
        rng.shuffle(cands)
        positives = set(rng.sample(cands, rng.randint(1, min(5, m))))
        out.append((cands, positives))
    return out


def test_closed_forms():
    assert mrr([[1]]) == 1.0 and ndcg_at_k([[1]], 5) == 1.0
    assert mrr([[2]]) == 0.5
    assert ndcg_at_k([[3]], 5) == pytest.approx(1 / math.log2(4)) == 0.5
    assert hit_at_k([[4]], 3) == 0.0 and recall_at_k([[1, 7]], 5) == 0.5


def test_against_brute_force():
    rankings = random_rankings(1000, seed=0)
    ranks = [positive_ranks(r, p) for r, p in rankings]
    for k in (1, 3, 5, 10, 20, 50, 100):
        b_mrr, b_hit, b_rec, b_ndcg = oracles.brute_metrics(rankings, k)
        assert abs(mrr(ranks) - b_mrr) < 1e-12
        assert abs(hit_at_k(ranks, k) - b_hit) < 1e-12
        assert abs(recall_at_k(ranks, k) - b_rec) < 1e-12
        assert abs(ndcg_at_k(ranks, k) - b_ndcg) < 1e-12


def test_report_monotone_and_bounded():
    ranks = [positive_ranks(r, p) for r, p in random_rankings(300, seed=1)]
    rep = ranking_report(ranks, times=[0.1, 0.3])
    ks = (5, 10, 20, 50, 100)
    assert all(rep[f"Recall@{a}"] <= rep[f"Recall@{b}"] for a, b in zip(ks, ks[1:]))
    assert rep["Hit@1"] <= rep["Hit@3"] <= rep["Hit@10"]
    assert all(0.0 <= v <= 1.0 for k, v in rep.items() if "@" in k or k == "MRR")
    assert rep["inference_time"] == pytest.approx(0.2)


def test_empty_query_skipped():
    assert mrr([[], [1]]) == 1.0
    assert ranking_report([[]])["n_queries"] == 0
    with pytest.raises(ValueError):
        mrr([[0]])


def test_diversity_hand_cases():
    assert ngram_diversity(["a a a"], 1) == pytest.approx(1 / 3)
    assert ngram_diversity(["a b a b"], 2) == pytest.approx(2 / 3)
    assert ngram_diversity(["alpha beta", "gamma delta"], 1) == 1.0
    assert math.isnan(ngram_diversity(["a b"], 3))
    with pytest.raises(ValueError):
        ngram_diversity(["a"], 7)


def test_diversity_oracle():
    rng = random.Random(3)
    vocab = [f"w{k}" for k in range(40)]
    corpus = [" ".join(rng.choice(vocab) for _ in range(rng.randint(2, 9))) for _ in range(500)]
    profile = diversity_profile(corpus)
    for n in range(1, 7):
        assert profile[n] == oracles.naive_ngram_diversity(corpus, n)


def test_diversity_joins_across_texts():
    # grams span text boundaries in the concatenated stream
    assert ngram_diversity(["a b", "a b"], 2) == pytest.approx(2 / 3)
    assert ngram_diversity(["A", "a"], 1) == 0.5
