from __future__ import annotations

import math
from typing import Iterable

MAX_N = 6


def ngram_diversity(corpus: Iterable[str], n: int) -> float:
    """Unique n-grams over all n-grams of the corpus joined into one token stream.

    Returns NaN when the stream is shorter than ``n``.
    """
    if not 1 <= n <= MAX_N:
        raise ValueError(f"n must be in 1..{MAX_N}")
    tokens = " ".join(corpus).lower().split()
    total = len(tokens) - n + 1
    if total <= 0:
        return math.nan
    grams = {tuple(tokens[i : i + n]) for i in range(total)}
    return len(grams) / total


def diversity_profile(corpus: list[str], max_n: int = MAX_N) -> dict[int, float]:
    return {n: ngram_diversity(corpus, n) for n in range(1, max_n + 1)}
