"""The three-stage knowledge selection cascade: retrieve, rank, rerank.

Stage 1 collects candidate triples whose subject or object mentions the
entity query (capped, default 500). Stage 2 ranks them by TF-IDF cosine
against the dialogue history plus response (keep 50). Stage 3 reranks with a
semantic similarity provider; turns whose best score falls below the
threshold (default 0.35) are abandoned as ungrounded, otherwise the top
triples (default 3) are selected.

All floating-point accumulation iterates tokens in sorted order so that
rankings are bit-reproducible across runs, platforms, and thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .core import KnowledgeStore, KnowledgeTriple, ProviderError, canonical_text, tokenize_metric


@dataclass(frozen=True)
class CascadeConfig:
    retrieve_cap: int = 500
    stat_keep: int = 50
    sem_threshold: float = 0.35
    final_k: int = 3
    passage_k: int = 5

    def __post_init__(self) -> None:
        for name in ("retrieve_cap", "stat_keep", "final_k", "passage_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not (self.final_k <= self.stat_keep <= self.retrieve_cap):
            raise ValueError("require final_k <= stat_keep <= retrieve_cap")

    def to_dict(self) -> dict:
        return {
            "retrieve_cap": self.retrieve_cap,
            "stat_keep": self.stat_keep,
            "sem_threshold": self.sem_threshold,
            "final_k": self.final_k,
            "passage_k": self.passage_k,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CascadeConfig":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown cascade config keys: {', '.join(sorted(unknown))}")
        return cls(**known)


@dataclass(frozen=True)
class ScoredTriple:
    triple: KnowledgeTriple
    stat_score: float | None = None
    sem_score: float | None = None


@dataclass(frozen=True)
class CascadeResult:
    selected: tuple[ScoredTriple, ...]
    grounded: bool
    audit: tuple[int, int, int] | None = None


@dataclass(frozen=True)
class TfidfIndex:
    """Per-document L2-normalized TF-IDF vectors over metric tokens."""

    vectors: tuple[dict, ...]
    idf: dict

    def cosine(self, i: int, j: int) -> float:
        return _dot(self.vectors[i], self.vectors[j])


def _dot(a: dict, b: dict) -> float:
    if len(b) < len(a):
        a, b = b, a
    total = 0.0
    for token in sorted(a):
        if token in b:
            total += a[token] * b[token]
    return total


def build_tfidf(docs: Sequence[str]) -> TfidfIndex:
    """tf = raw count, idf = ln((1+N)/(1+df)) + 1, vectors L2-normalized."""
    if not docs:
        raise ValueError("cannot build a TF-IDF index over zero documents")
    token_lists = [tokenize_metric(doc) for doc in docs]
    if all(not toks for toks in token_lists):
        raise ValueError("all documents are empty after tokenization")
    n_docs = len(docs)
    df: dict[str, int] = {}
    for toks in token_lists:
        for token in set(toks):
            df[token] = df.get(token, 0) + 1
    idf = {t: math.log((1 + n_docs) / (1 + d)) + 1.0 for t, d in df.items()}
    vectors = []
    for toks in token_lists:
        counts: dict[str, int] = {}
        for token in toks:
            counts[token] = counts.get(token, 0) + 1
        weights = {t: c * idf[t] for t, c in counts.items()}
        norm = math.sqrt(sum(weights[t] ** 2 for t in sorted(weights)))
        if norm > 0.0:
            vectors.append({t: w / norm for t, w in weights.items()})
        else:
            vectors.append({})
    return TfidfIndex(vectors=tuple(vectors), idf=idf)


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and list(haystack[i : i + n]) == list(needle):
            return True
    return False


def _entity_runs(store: KnowledgeStore):
    """Split entity keys once per store and invert them by token.

    Derived lookup data cached on the (frozen, deduplicated) store; concurrent
    rebuilds produce identical values, so the race is benign.
    """
    cached = getattr(store, "_entity_runs_cache", None)
    if cached is None:
        runs = tuple((tuple(key.split(" ")), ids) for key, ids in store.entity_index.items())
        by_token: dict[str, set[int]] = {}
        for i, (tokens, _) in enumerate(runs):
            for token in tokens:
                by_token.setdefault(token, set()).add(i)
        cached = (runs, by_token)
        object.__setattr__(store, "_entity_runs_cache", cached)
    return cached


def retrieve_candidates(entity_query: str, store: KnowledgeStore, cap: int) -> list[KnowledgeTriple]:
    """All triples whose subject or object contains the query's token run, capped.

    Matching is on contiguous metric-token subsequences, so "Barack Obama"
    matches "Barack Obama Sr." but not "Obama Barack". Truncation keeps
    stable store order.
    """
    if cap < 1:
        raise ValueError("cap must be a positive integer")
    query_tokens = tokenize_metric(entity_query)
    if not query_tokens:
        raise ValueError("entity query is empty after tokenization")
    runs, by_token = _entity_runs(store)
    key_ids: set[int] | None = None
    for token in query_tokens:
        bucket = by_token.get(token)
        if not bucket:
            return []
        key_ids = bucket.copy() if key_ids is None else key_ids & bucket
        if not key_ids:
            return []
    hit_ids: set[int] = set()
    for ki in key_ids:
        tokens, ids = runs[ki]
        if _contains_run(tokens, query_tokens):
            hit_ids.update(ids)
    ordered = sorted(hit_ids)[:cap]
    return [store.triples[i] for i in ordered]


def statistical_rank(query: str, candidates: Sequence[KnowledgeTriple], keep: int) -> list[ScoredTriple]:
    """TF-IDF cosine of each candidate's text against the query, top ``keep``.

    The index corpus is the candidate texts plus the query itself; ties keep
    the original candidate order.
    """
    if not candidates:
        raise ValueError("statistical_rank requires at least one candidate")
    if keep < 1:
        raise ValueError("keep must be a positive integer")
    if not tokenize_metric(query):
        raise ValueError("query is empty after tokenization")
    docs = [canonical_text(c) for c in candidates] + [query]
    index = build_tfidf(docs)
    query_vec = index.vectors[-1]
    scored = [
        ScoredTriple(triple=c, stat_score=_dot(index.vectors[i], query_vec))
        for i, c in enumerate(candidates)
    ]
    scored.sort(key=lambda s: -s.stat_score)
    return scored[:keep]


def semantic_rank(
    query: str,
    candidates: Sequence[ScoredTriple],
    provider,
    threshold: float,
    final_k: int,
) -> CascadeResult:
    """Rerank by provider score; abandon the turn when the best score is below threshold."""
    if final_k < 1:
        raise ValueError("final_k must be a positive integer")
    if any(c.stat_score is None for c in candidates):
        raise ValueError("semantic_rank candidates must carry stat_score")
    rescored = []
    for i, cand in enumerate(candidates):
        text = canonical_text(cand.triple)
        try:
            sem = provider.score(query, text)
        except Exception as exc:
            raise ProviderError(
                f"provider {provider.name!r} failed on candidate {i} ({text!r}): {exc}"
            ) from exc
        rescored.append((i, replace(cand, sem_score=sem)))
    rescored.sort(key=lambda pair: (-pair[1].sem_score, -pair[1].stat_score, pair[0]))
    ordered = tuple(c for _, c in rescored)
    grounded = bool(ordered) and ordered[0].sem_score >= threshold
    selected = ordered[:final_k] if grounded else ()
    return CascadeResult(selected=selected, grounded=grounded)


def retrieve_passages(query: str, passages: Sequence, k: int) -> list:
    """Top-k passages by TF-IDF cosine between the query and each full text."""
    if not passages:
        raise ValueError("retrieve_passages requires at least one passage")
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not tokenize_metric(query):
        raise ValueError("query is empty after tokenization")
    docs = [p.full_text() for p in passages] + [query]
    index = build_tfidf(docs)
    query_vec = index.vectors[-1]
    scored = list(enumerate(_dot(index.vectors[i], query_vec) for i in range(len(passages))))
    scored.sort(key=lambda pair: -pair[1])
    return [passages[i] for i, _ in scored[:k]]


def run_cascade(
    turn_context: Sequence[str],
    response: str | None,
    entity_query: str,
    store: KnowledgeStore,
    provider,
    cfg: CascadeConfig,
) -> CascadeResult:
    """Compose the three stages for one dialogue turn.

    At training time the response is part of the ranking query; at inference
    time pass ``response=None`` and only the context is used. The audit tuple
    records candidate counts after each stage.
    """
    parts = list(turn_context)
    if response is not None:
        parts.append(response)
    query = " ".join(parts)
    candidates = retrieve_candidates(entity_query, store, cfg.retrieve_cap)
    if not candidates:
        return CascadeResult(selected=(), grounded=False, audit=(0, 0, 0))
    ranked = statistical_rank(query, candidates, cfg.stat_keep)
    result = semantic_rank(query, ranked, provider, cfg.sem_threshold, cfg.final_k)
    audit = (len(candidates), len(ranked), len(result.selected))
    return replace(result, audit=audit)
