"""Training-example construction, persistence, and the experiment harnesses.

An example's input sequence is ``context: <speaker>: <text> ... knowledge:
<s | r | o> ; ...`` and its target is the responder turn verbatim. Length
budgeting drops whole context turns, oldest first, and never touches the
knowledge segment. The harnesses cover golden/retrieved mixing, topic-
distinct few-shot sampling, and topic coverage statistics.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .cascade import CascadeConfig, run_cascade
from .core import (
    Dialogue,
    FormatError,
    KnowledgeStore,
    KnowledgeTriple,
    canonical_text,
    entity_key,
    tokenize_length,
)

ORIGINS = ("golden", "retrieved", "mixed-golden", "mixed-retrieved", "none")
BUILD_MODES = ("golden-passthrough", "cascade")


@dataclass(frozen=True)
class TrainingExample:
    dialogue_id: str
    turn_index: int
    input_text: str
    target_text: str
    knowledge: tuple[KnowledgeTriple, ...]
    knowledge_origin: str
    audit: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        if self.knowledge_origin not in ORIGINS:
            raise ValueError(f"unknown knowledge_origin {self.knowledge_origin!r}")
        if (self.knowledge_origin == "none") != (len(self.knowledge) == 0):
            raise ValueError("knowledge_origin must be 'none' exactly when knowledge is empty")


@dataclass(frozen=True)
class TurnAudit:
    """Per-turn cascade outcome, kept for the build report."""

    dialogue_id: str
    turn_index: int
    grounded: bool
    counts: tuple[int, int, int]


def build_example(
    dialogue: Dialogue,
    turn_index: int,
    knowledge: Sequence[KnowledgeTriple],
    max_len: int,
    origin: str = "golden",
    audit: tuple[int, int, int] | None = None,
) -> TrainingExample:
    """Serialize one responder turn into an input/target pair.

    Context turns older than the length budget are dropped whole; the
    knowledge segment is never truncated. Raises when the knowledge segment
    alone cannot fit ``max_len`` whitespace tokens.
    """
    if max_len < 1:
        raise ValueError("max_len must be a positive integer")
    if not 0 <= turn_index < len(dialogue.turns):
        raise ValueError(f"turn_index {turn_index} out of range for dialogue {dialogue.id!r}")
    turn = dialogue.turns[turn_index]
    if turn.speaker != "responder":
        raise ValueError(f"turn {turn_index} of dialogue {dialogue.id!r} is not a responder turn")

    knowledge = tuple(knowledge)
    if knowledge:
        know_segment = " knowledge: " + " ; ".join(canonical_text(k) for k in knowledge)
    else:
        know_segment = ""
        origin = "none"
    fixed_tokens = 1 + len(tokenize_length(know_segment))
    if fixed_tokens > max_len:
        raise ValueError(
            f"knowledge segment needs {fixed_tokens} tokens, over the max_len of {max_len}"
        )

    pieces = [f"{t.speaker}: {t.text}" for t in dialogue.turns[:turn_index]]
    counts = [len(tokenize_length(p)) for p in pieces]
    total = fixed_tokens + sum(counts)
    start = 0
    while total > max_len and start < len(pieces):
        total -= counts[start]
        start += 1

    kept = pieces[start:]
    input_text = "context:" + (" " + " ".join(kept) if kept else "") + know_segment
    return TrainingExample(
        dialogue_id=dialogue.id,
        turn_index=turn_index,
        input_text=input_text,
        target_text=turn.text,
        knowledge=knowledge,
        knowledge_origin=origin,
        audit=audit,
    )


def _responder_turns(dialogues: Sequence[Dialogue]):
    for dialogue in dialogues:
        for i, turn in enumerate(dialogue.turns):
            if turn.speaker == "responder":
                yield dialogue, i, turn


def build_corpus_audited(
    dialogues: Sequence[Dialogue],
    store: KnowledgeStore | None,
    provider,
    cfg: CascadeConfig,
    mode: str,
    max_len: int = 512,
    threads: int = 1,
) -> tuple[list[TrainingExample], list[TurnAudit]]:
    """build_corpus plus the per-turn audit trail (including abandoned turns)."""
    if mode not in BUILD_MODES:
        raise ValueError(f"unknown corpus mode {mode!r}")

    if mode == "golden-passthrough":
        examples = []
        for dialogue, i, turn in _responder_turns(dialogues):
            if turn.golden_knowledge:
                examples.append(
                    build_example(
                        dialogue, i, turn.golden_knowledge[: cfg.final_k], max_len, origin="golden"
                    )
                )
        return examples, []

    if store is None:
        raise ValueError("cascade mode requires a knowledge store")
    tasks = list(_responder_turns(dialogues))

    def run_one(task):
        dialogue, i, turn = task
        context = [t.text for t in dialogue.turns[:i]]
        return run_cascade(context, turn.text, dialogue.topic, store, provider, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, tasks))
    else:
        results = [run_one(t) for t in tasks]

    examples = []
    audits = []
    for (dialogue, i, _), result in zip(tasks, results):
        audits.append(TurnAudit(dialogue.id, i, result.grounded, result.audit))
        if result.grounded:
            examples.append(
                build_example(
                    dialogue,
                    i,
                    [s.triple for s in result.selected],
                    max_len,
                    origin="retrieved",
                    audit=result.audit,
                )
            )
    return examples, audits


def build_corpus(
    dialogues: Sequence[Dialogue],
    store: KnowledgeStore | None,
    provider,
    cfg: CascadeConfig,
    mode: str,
    max_len: int = 512,
    threads: int = 1,
) -> list[TrainingExample]:
    """One example per labeled (golden-passthrough) or grounded (cascade) responder turn."""
    examples, _ = build_corpus_audited(dialogues, store, provider, cfg, mode, max_len, threads)
    return examples


@dataclass(frozen=True)
class MixSpec:
    golden_percent: int
    seed: int

    def __post_init__(self) -> None:
        if not 0 <= self.golden_percent <= 100:
            raise ValueError("golden_percent must lie in [0, 100]")


def _keyed(examples: Sequence[TrainingExample], label: str) -> dict:
    table: dict[tuple[str, int], TrainingExample] = {}
    for e in examples:
        key = (e.dialogue_id, e.turn_index)
        if key in table:
            raise ValueError(f"{label} corpus has duplicate example key {key}")
        table[key] = e
    return table


def mix_knowledge(
    golden: Sequence[TrainingExample],
    retrieved: Sequence[TrainingExample],
    spec: MixSpec,
) -> list[TrainingExample]:
    """Swap a seeded ``golden_percent`` share of aligned examples to their golden variant.

    Exactly ``round(p/100 * N)`` examples take the golden variant; origins are
    rewritten to ``mixed-golden`` / ``mixed-retrieved``. Output order follows
    the retrieved corpus.
    """
    gmap = _keyed(golden, "golden")
    rmap = _keyed(retrieved, "retrieved")
    if gmap.keys() != rmap.keys():
        only_g = sorted(gmap.keys() - rmap.keys())
        only_r = sorted(rmap.keys() - gmap.keys())
        raise ValueError(
            "misaligned corpora; "
            f"missing from retrieved: {only_g[:5]}{'...' if len(only_g) > 5 else ''}; "
            f"missing from golden: {only_r[:5]}{'...' if len(only_r) > 5 else ''}"
        )
    keys = sorted(rmap)
    rng = random.Random(spec.seed)
    shuffled = list(keys)
    rng.shuffle(shuffled)
    n_golden = round(spec.golden_percent * len(keys) / 100)
    golden_keys = set(shuffled[:n_golden])

    out = []
    for e in retrieved:
        key = (e.dialogue_id, e.turn_index)
        source = gmap[key] if key in golden_keys else rmap[key]
        origin = "mixed-golden" if key in golden_keys else "mixed-retrieved"
        if not source.knowledge:
            origin = "none"
        out.append(replace(source, knowledge_origin=origin))
    return out


def sample_few_shot(dialogues: Sequence[Dialogue], n: int, seed: int) -> list[Dialogue]:
    """Seeded sample of n dialogues with pairwise-distinct topics, in corpus order."""
    if n < 0:
        raise ValueError("n must be non-negative")
    by_topic: dict[str, list[int]] = {}
    for i, d in enumerate(dialogues):
        by_topic.setdefault(d.topic, []).append(i)
    topics = sorted(by_topic)
    if n > len(topics):
        raise ValueError(
            f"cannot sample {n} distinct topics from {len(topics)} "
            f"({n - len(topics)} short)"
        )
    rng = random.Random(seed)
    chosen = rng.sample(topics, n)
    picked = sorted(rng.choice(by_topic[topic]) for topic in chosen)
    return [dialogues[i] for i in picked]


def coverage_stats(dialogues: Sequence[Dialogue], store: KnowledgeStore) -> float:
    """Percentage of distinct store subject entities that appear as dialogue topics."""
    if len(store) == 0:
        raise ValueError("coverage requires a non-empty store")
    subjects = {entity_key(t.subject) for t in store.triples}
    subjects.discard("")
    if not subjects:
        raise ValueError("store has no indexable subject entities")
    topics = {entity_key(d.topic) for d in dialogues}
    topics.discard("")
    return 100.0 * len(topics & subjects) / len(subjects)


def example_to_json(example: TrainingExample) -> str:
    """One corpus line, fixed key order, compact separators."""
    rec = {
        "did": example.dialogue_id,
        "turn": example.turn_index,
        "input": example.input_text,
        "target": example.target_text,
        "knowledge": [[k.subject, k.relation, k.object] for k in example.knowledge],
        "origin": example.knowledge_origin,
    }
    if example.audit is not None:
        rec["audit"] = list(example.audit)
    return json.dumps(rec, ensure_ascii=False, separators=(",", ":"))


def emit_corpus(examples: Sequence[TrainingExample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in examples:
            fh.write(example_to_json(e) + "\n")


def _example_from_obj(rec: dict, where: str) -> TrainingExample:
    for key, kind in (("did", str), ("turn", int), ("input", str), ("target", str),
                      ("origin", str)):
        if key not in rec or not isinstance(rec[key], kind) or isinstance(rec[key], bool):
            raise FormatError(f"{where}: missing or mistyped field {key!r}")
    if not isinstance(rec.get("knowledge"), list):
        raise FormatError(f"{where}: knowledge must be a list")
    triples = []
    for entry in rec["knowledge"]:
        if (
            not isinstance(entry, list)
            or len(entry) != 3
            or not all(isinstance(x, str) for x in entry)
        ):
            raise FormatError(f"{where}: knowledge entries must be [s, r, o] strings")
        try:
            triples.append(KnowledgeTriple(*entry, source_tag="labeled"))
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc
    audit = None
    if "audit" in rec:
        raw = rec["audit"]
        if not isinstance(raw, list) or len(raw) != 3 or not all(isinstance(x, int) for x in raw):
            raise FormatError(f"{where}: audit must be three integers")
        audit = tuple(raw)
    try:
        return TrainingExample(
            dialogue_id=rec["did"],
            turn_index=rec["turn"],
            input_text=rec["input"],
            target_text=rec["target"],
            knowledge=tuple(triples),
            knowledge_origin=rec["origin"],
            audit=audit,
        )
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def load_corpus(path) -> list[TrainingExample]:
    """Read a corpus JSON-lines file; loaded triples carry the ``labeled`` tag."""
    out: list[TrainingExample] = []
    last_good = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(
                    f"{where}: invalid JSON ({exc.msg}); last good line was {last_good}"
                ) from exc
            if not isinstance(rec, dict):
                raise FormatError(f"{where}: expected a JSON object")
            out.append(_example_from_obj(rec, where))
            last_good = lineno
    return out
