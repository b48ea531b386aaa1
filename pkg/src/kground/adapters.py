"""Adapters that homogenize heterogeneous sources into triples and dialogues.

Every adapter output satisfies the KnowledgeTriple invariants, whatever the
source looked like. Line-oriented loaders report errors with ``path:line``;
adapters that generate text themselves (document extraction, tables,
keywords) sanitize instead of rejecting.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

from .core import (
    Dialogue,
    DialogueTurn,
    FormatError,
    KnowledgeStore,
    KnowledgeTriple,
    normalize_field,
    sanitize_field,
    tokenize_metric,
)

TRIPLE_FORMATS = ("tsv", "ntriples")

_NT_LINE_RE = re.compile(
    r'^<([^<>]*)>\s+<([^<>]*)>\s+(<[^<>]*>|"(?:[^"\\]|\\.)*")\s*\.\s*$'
)
_NT_ESCAPES = {"\\\\": "\\", '\\"': '"', "\\n": "\n", "\\r": "\r", "\\t": "\t"}


def _iri_label(iri: str) -> str:
    """Reduce an IRI to its final path segment, with underscores as spaces."""
    tail = iri.rsplit("/", 1)[-1]
    tail = tail.rsplit("#", 1)[-1]
    return tail.replace("_", " ")


def _unescape_literal(raw: str) -> str:
    out = raw
    for esc, plain in _NT_ESCAPES.items():
        out = out.replace(esc, plain)
    return out


def _parse_nt_line(line: str):
    m = _NT_LINE_RE.match(line)
    if m is None:
        return None
    subj = _iri_label(m.group(1))
    rel = _iri_label(m.group(2))
    obj_raw = m.group(3)
    if obj_raw.startswith("<"):
        obj = _iri_label(obj_raw[1:-1])
    else:
        obj = _unescape_literal(obj_raw[1:-1])
    return subj, rel, obj


def load_triple_dump(path, fmt: str = "tsv", source_tag: str = "graph") -> KnowledgeStore:
    """Load an offline triple dump (TSV or an N-Triples subset) into a store.

    TSV lines must contain exactly two tab separators; N-Triples lines are
    ``<s> <p> <o> .`` with IRIs or quoted literals. Duplicate triples are
    dropped. Blank lines (and ``#`` comments in N-Triples) are skipped.
    """
    if fmt not in TRIPLE_FORMATS:
        raise ValueError(f"unknown triple dump format {fmt!r}")
    triples: list[KnowledgeTriple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if fmt == "ntriples":
                if line.lstrip().startswith("#"):
                    continue
                parsed = _parse_nt_line(line)
                if parsed is None:
                    raise FormatError(f"{path}:{lineno}: not a valid N-Triples statement")
                fields = parsed
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                    )
                fields = tuple(parts)
            cleaned = []
            for name, value in zip(("subject", "relation", "object"), fields):
                value = normalize_field(value)
                if not value:
                    raise FormatError(f"{path}:{lineno}: empty {name}")
                if " | " in value:
                    raise FormatError(f"{path}:{lineno}: {name} contains ' | '")
                cleaned.append(value)
            triples.append(KnowledgeTriple(*cleaned, source_tag=source_tag))
    return KnowledgeStore.build(triples)


@dataclass(frozen=True)
class PassageDoc:
    """A titled passage, e.g. the grounding article for a dialogue."""

    title: str
    sentences: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.title.strip():
            raise ValueError("passage title must be non-empty")
        if not self.sentences:
            raise ValueError("passage must contain at least one sentence")

    def full_text(self) -> str:
        return " ".join((self.title,) + self.sentences)


class TripleExtractor(Protocol):
    def extract(self, title: str, sentence: str) -> Sequence[KnowledgeTriple]: ...


_PHRASE_STRIP = " \t.,;:!?"


@dataclass(frozen=True)
class VerbLexiconExtractor:
    """Baseline extractor: split a sentence at the first lexicon verb."""

    verbs: frozenset[str]

    def extract(self, title: str, sentence: str) -> list[KnowledgeTriple]:
        words = sentence.split()
        for i, word in enumerate(words):
            norm = " ".join(tokenize_metric(word))
            if norm in self.verbs and 0 < i < len(words) - 1:
                subject = " ".join(words[:i]).strip(_PHRASE_STRIP)
                obj = " ".join(words[i + 1 :]).strip(_PHRASE_STRIP)
                if subject and obj:
                    return [
                        KnowledgeTriple(
                            sanitize_field(subject),
                            norm,
                            sanitize_field(obj),
                            source_tag="document",
                        )
                    ]
        return []


def extract_document_triples(doc: PassageDoc, extractor: TripleExtractor) -> list[KnowledgeTriple]:
    """Extract one or more triples per sentence, falling back to (title, states, sentence)."""
    out: list[KnowledgeTriple] = []
    for sentence in doc.sentences:
        found = list(extractor.extract(doc.title, sentence))
        if found:
            out.extend(found)
        else:
            out.append(
                KnowledgeTriple(
                    sanitize_field(doc.title),
                    "states",
                    sanitize_field(sentence),
                    source_tag="document",
                )
            )
    return out


@dataclass(frozen=True)
class TableRow:
    entity: str
    columns: dict

    def __post_init__(self) -> None:
        if not self.entity.strip():
            raise ValueError("table row entity must be non-empty")


def load_tabular(rows: Sequence[TableRow], relation_map: dict, delimiter: str = ";") -> KnowledgeStore:
    """Turn mapped table columns into (entity, relation, cell) triples.

    Multi-valued cells are split on ``delimiter``. Columns without a mapping
    are ignored; rows with only unmapped columns yield nothing.
    """
    observed = set()
    for row in rows:
        observed.update(row.columns)
    unknown = sorted(set(relation_map) - observed)
    if unknown:
        raise ValueError(f"relation_map names unobserved columns: {', '.join(unknown)}")
    triples: list[KnowledgeTriple] = []
    for row in rows:
        for column, relation in relation_map.items():
            if column not in row.columns:
                continue
            cell = str(row.columns[column])
            for value in cell.split(delimiter):
                value = sanitize_field(value)
                if value:
                    triples.append(
                        KnowledgeTriple(
                            sanitize_field(row.entity),
                            sanitize_field(relation),
                            value,
                            source_tag="table",
                        )
                    )
    return KnowledgeStore.build(triples)


def load_keyword_source(entity: str, keywords: Sequence[str]) -> list[KnowledgeTriple]:
    """One (entity, keyword, kw) triple per keyword, order preserved, no dedup."""
    if not entity.strip():
        raise ValueError("keyword source entity must be non-empty")
    out = []
    for kw in keywords:
        cleaned = sanitize_field(kw)
        if cleaned:
            out.append(
                KnowledgeTriple(sanitize_field(entity), "keyword", cleaned, source_tag="keyword")
            )
    return out


def load_keyword_file(path) -> list[KnowledgeTriple]:
    """JSON-lines of {"entity": str, "keywords": [str]} records."""
    out: list[KnowledgeTriple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "entity" not in rec or "keywords" not in rec:
                raise FormatError(f"{path}:{lineno}: expected an object with entity and keywords")
            try:
                out.extend(load_keyword_source(rec["entity"], rec["keywords"]))
            except (ValueError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def _parse_turn(obj, where: str) -> DialogueTurn:
    if not isinstance(obj, dict) or "speaker" not in obj or "text" not in obj:
        raise FormatError(f"{where}: turn needs speaker and text")
    knowledge = None
    if obj.get("knowledge") is not None:
        if not isinstance(obj["knowledge"], list):
            raise FormatError(f"{where}: knowledge must be a list of [s, r, o]")
        parsed = []
        for entry in obj["knowledge"]:
            if not isinstance(entry, list) or len(entry) != 3:
                raise FormatError(f"{where}: knowledge entries must be [s, r, o]")
            try:
                parsed.append(
                    KnowledgeTriple(
                        *(sanitize_field(str(x)) for x in entry), source_tag="labeled"
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{where}: {exc}") from exc
        knowledge = tuple(parsed)
    items = None
    if obj.get("items") is not None:
        if not isinstance(obj["items"], list):
            raise FormatError(f"{where}: items must be a list of strings")
        items = tuple(str(x) for x in obj["items"])
    try:
        return DialogueTurn(
            speaker=obj["speaker"],
            text=str(obj["text"]),
            golden_knowledge=knowledge,
            golden_items=items,
        )
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def load_dialogues(path) -> list[Dialogue]:
    """JSON-lines dialogues; labeled knowledge passes through with tag ``labeled``."""
    dialogues: list[Dialogue] = []
    seen_ids: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise FormatError(f"{where}: expected a JSON object")
            missing = [k for k in ("id", "topic", "task", "domain", "turns") if k not in rec]
            if missing:
                raise FormatError(f"{where}: missing keys: {', '.join(missing)}")
            did = str(rec["id"])
            if did in seen_ids:
                raise FormatError(
                    f"{where}: duplicate dialogue id {did!r} (first seen on line {seen_ids[did]})"
                )
            seen_ids[did] = lineno
            if not isinstance(rec["turns"], list):
                raise FormatError(f"{where}: turns must be a list")
            turns = tuple(_parse_turn(t, where) for t in rec["turns"])
            try:
                dialogues.append(
                    Dialogue(
                        id=did,
                        topic=str(rec["topic"]),
                        task_tag=str(rec["task"]),
                        domain_tag=str(rec["domain"]),
                        turns=turns,
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{where}: {exc}") from exc
    return dialogues


def dialogue_to_json(dialogue: Dialogue) -> str:
    """Serialize one dialogue back to the JSON-lines schema (fixed key order)."""
    turns = []
    for t in dialogue.turns:
        obj: dict = {"speaker": t.speaker, "text": t.text}
        if t.golden_knowledge is not None:
            obj["knowledge"] = [[k.subject, k.relation, k.object] for k in t.golden_knowledge]
        if t.golden_items is not None:
            obj["items"] = list(t.golden_items)
        turns.append(obj)
    rec = {
        "id": dialogue.id,
        "topic": dialogue.topic,
        "task": dialogue.task_tag,
        "domain": dialogue.domain_tag,
        "turns": turns,
    }
    return json.dumps(rec, ensure_ascii=False, separators=(",", ":"))


def emit_dialogues(dialogues: Sequence[Dialogue], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in dialogues:
            fh.write(dialogue_to_json(d) + "\n")


def load_wordlist(path) -> set[str]:
    """Profanity word list: one entry per line, stored as metric tokens."""
    words: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            words.update(tokenize_metric(raw))
    return words


def filter_profanity(triples: Sequence[KnowledgeTriple], wordlist: set[str]) -> list[KnowledgeTriple]:
    """Drop triples whose subject, relation, or object mentions a blocked token."""
    if not wordlist:
        return list(triples)
    survivors = []
    for t in triples:
        tokens = set(tokenize_metric(t.subject))
        tokens.update(tokenize_metric(t.relation))
        tokens.update(tokenize_metric(t.object))
        if not tokens & wordlist:
            survivors.append(t)
    return survivors
