"""Independent brute-force oracles used to cross-check pipeline outputs.

These deliberately avoid the library's index/vector machinery: plain Counter
arithmetic, recursive LCS, naive subsequence scans. Floating-point sums run
in sorted-token order, matching the documented evaluation order of the
implementations they check.
"""

from __future__ import annotations

import functools
import math
from collections import Counter

from kground import tokenize_metric


def tfidf_cosine_rank(query_text: str, candidate_texts: list[str]) -> list[tuple[int, float]]:
    """Rank candidates by TF-IDF cosine against the query, ties by input order.

    The document collection is the candidates plus the query; tf is the raw
    count, idf = ln((1+N)/(1+df)) + 1, vectors L2-normalized.
    """
    docs = list(candidate_texts) + [query_text]
    token_lists = [tokenize_metric(d) for d in docs]
    n_docs = len(docs)
    df: Counter = Counter()
    for toks in token_lists:
        df.update(set(toks))

    def normalized_vector(toks):
        counts = Counter(toks)
        weights = {
            t: c * (math.log((1 + n_docs) / (1 + df[t])) + 1.0) for t, c in counts.items()
        }
        norm = math.sqrt(sum(weights[t] ** 2 for t in sorted(weights)))
        if norm == 0.0:
            return {}
        return {t: w / norm for t, w in weights.items()}

    vectors = [normalized_vector(toks) for toks in token_lists]
    query_vec = vectors[-1]
    scores = []
    for i in range(len(candidate_texts)):
        vec = vectors[i]
        common = sorted(set(vec) & set(query_vec))
        scores.append((i, sum(vec[t] * query_vec[t] for t in common)))
    scores.sort(key=lambda pair: (-pair[1], pair[0]))
    return scores


def lcs_recursive(a: tuple, b: tuple) -> int:
    """Textbook recursive longest-common-subsequence length."""

    @functools.lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


def best_semantic_match(query: str, triples, provider, render) -> float:
    """Max provider score over every triple in a collection, scored one by one."""
    best = -2.0
    for t in triples:
        best = max(best, provider.score(query, render(t)))
    return best
