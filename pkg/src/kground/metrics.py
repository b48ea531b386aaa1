"""Generation metrics: BLEU-4, ROUGE-L, unigram F1, knowledge F1, Dist-n, Rec.

All overlap metrics run on metric tokens (lowercased, punctuation dropped).
BLEU-4 is corpus-level and unsmoothed by default: any n-gram order with zero
matches corpus-wide zeroes the score. ROUGE-L, F1, KF1 and Dist-n are
macro-averages over records. Rec counts a record as a hit when any golden
item title occurs as a contiguous token run inside the prediction.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from . import adapters, corpus
from .core import FormatError, canonical_text, tokenize_metric

_YEAR_SUFFIX_RE = re.compile(r"\s*\(\d{4}\)\s*$")


@dataclass(frozen=True)
class EvalRecord:
    prediction: str
    reference: str
    golden_knowledge_text: str | None = None
    golden_items: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.reference.strip():
            raise ValueError("reference must be non-empty")


@dataclass(frozen=True)
class MetricReport:
    """Metric values in [0, 1]; inapplicable metrics stay None, never zero."""

    bleu4: float | None = None
    rouge_l: float | None = None
    f1: float | None = None
    kf1: float | None = None
    dist2: float | None = None
    dist4: float | None = None
    rec: float | None = None
    n_records: int = 0

    def to_dict(self) -> dict:
        out: dict = {}
        for name in ("bleu4", "rouge_l", "f1", "kf1", "dist2", "dist4", "rec"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["n_records"] = self.n_records
        return out


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuStats:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    score: float


def corpus_bleu_stats(records: Sequence[EvalRecord]) -> BleuStats:
    """Unsmoothed corpus BLEU-4 with its per-order modified precisions."""
    if not records:
        raise ValueError("bleu4 requires at least one record")
    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    pred_len = 0
    ref_len = 0
    for r in records:
        pred = tokenize_metric(r.prediction)
        ref = tokenize_metric(r.reference)
        pred_len += len(pred)
        ref_len += len(ref)
        for n in range(1, 5):
            pred_grams = _ngram_counts(pred, n)
            ref_grams = _ngram_counts(ref, n)
            totals[n - 1] += sum(pred_grams.values())
            matches[n - 1] += sum(
                min(count, ref_grams[gram]) for gram, count in pred_grams.items()
            )
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if pred_len == 0:
        return BleuStats(precisions, 0.0, 0.0)
    bp = 1.0 if pred_len > ref_len else math.exp(1.0 - ref_len / pred_len)
    if any(p == 0.0 for p in precisions):
        return BleuStats(precisions, bp, 0.0)
    score = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuStats(precisions, bp, score)


def _sentence_bleu_smoothed(pred: list[str], ref: list[str]) -> float:
    # add-one smoothing on orders >= 2 only; order 1 stays exact
    if not pred:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        pred_grams = _ngram_counts(pred, n)
        ref_grams = _ngram_counts(ref, n)
        total = sum(pred_grams.values())
        match = sum(min(c, ref_grams[g]) for g, c in pred_grams.items())
        if n >= 2:
            p = (match + 1.0) / (total + 1.0)
        else:
            p = match / total if total else 0.0
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    bp = 1.0 if len(pred) > len(ref) else math.exp(1.0 - len(ref) / len(pred))
    return bp * math.exp(log_sum / 4.0)


def bleu4(records: Sequence[EvalRecord], smooth: bool = False) -> float:
    """Corpus BLEU-4; ``smooth=True`` switches to an averaged per-sentence variant."""
    if not records:
        raise ValueError("bleu4 requires at least one record")
    if not smooth:
        return corpus_bleu_stats(records).score
    scores = [
        _sentence_bleu_smoothed(tokenize_metric(r.prediction), tokenize_metric(r.reference))
        for r in records
    ]
    return math.fsum(scores) / len(scores)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_l(records: Sequence[EvalRecord]) -> float:
    """Macro-averaged LCS F1 (beta = 1) over metric tokens."""
    if not records:
        raise ValueError("rouge_l requires at least one record")
    scores = []
    for r in records:
        pred = tokenize_metric(r.prediction)
        ref = tokenize_metric(r.reference)
        if not pred or not ref:
            continue
        lcs = _lcs_length(pred, ref)
        scores.append(_f1(lcs / len(pred), lcs / len(ref)))
    # fsum keeps the macro-average independent of record order
    return math.fsum(scores) / len(records)


def _overlap_f1(pred_text: str, target_text: str) -> float:
    pred = tokenize_metric(pred_text)
    target = tokenize_metric(target_text)
    if not pred or not target:
        return 0.0
    overlap = sum((Counter(pred) & Counter(target)).values())
    return _f1(overlap / len(pred), overlap / len(target))


def unigram_f1(records: Sequence[EvalRecord]) -> float:
    """Macro-averaged multiset unigram F1 of prediction vs reference."""
    if not records:
        raise ValueError("unigram_f1 requires at least one record")
    return math.fsum(_overlap_f1(r.prediction, r.reference) for r in records) / len(records)


def kf1(records: Sequence[EvalRecord]) -> float:
    """Unigram F1 of prediction vs golden knowledge text; needs it on every record."""
    if not records:
        raise ValueError("kf1 requires at least one record")
    if any(r.golden_knowledge_text is None for r in records):
        raise ValueError("kf1 requires golden_knowledge_text on every record")
    return math.fsum(
        _overlap_f1(r.prediction, r.golden_knowledge_text) for r in records
    ) / len(records)


def distinct_n(records: Sequence[EvalRecord], n: int) -> float:
    """Per-record distinct/total n-gram ratio, macro-averaged over records."""
    if not records:
        raise ValueError("distinct_n requires at least one record")
    if n < 1:
        raise ValueError("n must be a positive integer")
    ratios = []
    for r in records:
        tokens = tokenize_metric(r.prediction)
        grams = _ngram_counts(tokens, n)
        n_grams = sum(grams.values())
        if n_grams:
            ratios.append(len(grams) / n_grams)
    return math.fsum(ratios) / len(records)


def normalize_item_title(title: str) -> list[str]:
    """Metric tokens of a title with any trailing parenthesized year removed."""
    return tokenize_metric(_YEAR_SUFFIX_RE.sub("", title))


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    return any(list(haystack[i : i + n]) == list(needle) for i in range(len(haystack) - n + 1))


def rec_recall(records: Sequence[EvalRecord]) -> float:
    """Share of item-carrying records whose prediction mentions a golden item."""
    scored = [r for r in records if r.golden_items]
    if not scored:
        raise ValueError("rec_recall requires records carrying golden_items")
    hits = 0
    for r in scored:
        pred_tokens = tokenize_metric(r.prediction)
        for item in r.golden_items:
            title = normalize_item_title(item)
            if title and _contains_run(pred_tokens, title):
                hits += 1
                break
    return hits / len(scored)


def evaluate(records: Sequence[EvalRecord], smooth_bleu: bool = False) -> MetricReport:
    """Compute every metric the records support."""
    if not records:
        raise ValueError("evaluate requires at least one record")
    report_kf1 = None
    if all(r.golden_knowledge_text is not None for r in records):
        report_kf1 = kf1(records)
    report_rec = None
    if any(r.golden_items for r in records):
        report_rec = rec_recall(records)
    return MetricReport(
        bleu4=bleu4(records, smooth=smooth_bleu),
        rouge_l=rouge_l(records),
        f1=unigram_f1(records),
        kf1=report_kf1,
        dist2=distinct_n(records, 2),
        dist4=distinct_n(records, 4),
        rec=report_rec,
        n_records=len(records),
    )


def _sniff_corpus_jsonl(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if not line.startswith("{"):
                return False
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                return False
            return isinstance(rec, dict) and {"did", "turn", "target"} <= rec.keys()
    return False


def _read_plain_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def _knowledge_text(example: corpus.TrainingExample) -> str | None:
    if not example.knowledge:
        return None
    return " ; ".join(canonical_text(k) for k in example.knowledge)


def load_eval_records(pred_path, ref_path, dialogues_path=None) -> list[EvalRecord]:
    """Pair predictions with references (and optional golden items) into records.

    Both files may be plain text (one response per line, aligned by order) or
    corpus JSON-lines (aligned by dialogue id and turn). Golden items for the
    Rec metric come from a dialogues file keyed the same way.
    """
    ref_is_corpus = _sniff_corpus_jsonl(ref_path)
    pred_is_corpus = _sniff_corpus_jsonl(pred_path)

    items_by_key: dict[tuple[str, int], tuple[str, ...]] = {}
    if dialogues_path is not None:
        for d in adapters.load_dialogues(dialogues_path):
            for i, turn in enumerate(d.turns):
                if turn.golden_items:
                    items_by_key[(d.id, i)] = turn.golden_items

    if ref_is_corpus:
        refs = corpus.load_corpus(ref_path)
        if pred_is_corpus:
            preds = corpus.load_corpus(pred_path)
            pred_by_key = {(p.dialogue_id, p.turn_index): p for p in preds}
            ref_keys = {(r.dialogue_id, r.turn_index) for r in refs}
            if pred_by_key.keys() != ref_keys:
                missing = sorted(ref_keys - pred_by_key.keys())[:5]
                extra = sorted(pred_by_key.keys() - ref_keys)[:5]
                raise ValueError(
                    f"prediction/reference keys differ; missing {missing}, extra {extra}"
                )
            texts = [pred_by_key[(r.dialogue_id, r.turn_index)].target_text for r in refs]
        else:
            texts = _read_plain_lines(pred_path)
            if len(texts) != len(refs):
                raise ValueError(
                    f"{len(texts)} predictions for {len(refs)} references"
                )
        return [
            EvalRecord(
                prediction=text,
                reference=ref.target_text,
                golden_knowledge_text=_knowledge_text(ref),
                golden_items=items_by_key.get((ref.dialogue_id, ref.turn_index)),
            )
            for text, ref in zip(texts, refs)
        ]

    ref_lines = _read_plain_lines(ref_path)
    pred_lines = _read_plain_lines(pred_path)
    if len(pred_lines) != len(ref_lines):
        raise ValueError(f"{len(pred_lines)} predictions for {len(ref_lines)} references")
    try:
        return [EvalRecord(prediction=p, reference=r) for p, r in zip(pred_lines, ref_lines)]
    except ValueError as exc:
        raise FormatError(f"{ref_path}: {exc}") from exc


def evaluate_file(pred_path, ref_path, dialogues_path=None, smooth_bleu: bool = False) -> MetricReport:
    return evaluate(load_eval_records(pred_path, ref_path, dialogues_path), smooth_bleu)
