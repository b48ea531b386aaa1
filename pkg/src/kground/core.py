"""Core domain types and the text primitives every other module builds on."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field

SOURCE_TAGS = ("graph", "document", "table", "labeled", "keyword")
SPEAKERS = ("seeker", "responder")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_FIELD_WS_RE = re.compile(r"[\t\r\n]+")


class FormatError(ValueError):
    """Malformed input file; the message names the offending line."""


class ProviderError(RuntimeError):
    """A similarity provider failed. The pipeline aborts; no default score."""


def tokenize_metric(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; the unit for all overlap metrics.

    NFKC-normalizes, lowercases, and keeps maximal runs of letters/digits;
    punctuation (including underscores) is dropped.
    """
    normalized = unicodedata.normalize("NFKC", text).lower()
    return _TOKEN_RE.findall(normalized)


def tokenize_length(text: str) -> list[str]:
    """Whitespace tokens; the unit for input-length budgeting."""
    return text.split()


def normalize_field(value: str) -> str:
    """Collapse tabs/newlines inside a field to single spaces and trim."""
    return _FIELD_WS_RE.sub(" ", value).strip()


def sanitize_field(value: str) -> str:
    """normalize_field plus defusing of the ' | ' separator for generated text."""
    cleaned = normalize_field(value)
    while " | " in cleaned:
        cleaned = cleaned.replace(" | ", " / ")
    return cleaned


@dataclass(frozen=True, slots=True)
class KnowledgeTriple:
    """One (subject, relation, object) fact; the atom of the unified representation."""

    subject: str
    relation: str
    object: str
    source_tag: str = "graph"

    def __post_init__(self) -> None:
        for name in ("subject", "relation", "object"):
            value = getattr(self, name)
            if not value or not value.strip():
                raise ValueError(f"triple {name} must be non-empty")
            if "\t" in value or "\n" in value or "\r" in value:
                raise ValueError(f"triple {name} contains tab/newline; normalize the field first")
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source_tag {self.source_tag!r}")


def canonical_text(triple: KnowledgeTriple) -> str:
    """Render a triple as ``subject | relation | object``."""
    return f"{triple.subject.strip()} | {triple.relation.strip()} | {triple.object.strip()}"


@dataclass(frozen=True, slots=True)
class DialogueTurn:
    speaker: str
    text: str
    golden_knowledge: tuple[KnowledgeTriple, ...] | None = None
    golden_items: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.speaker not in SPEAKERS:
            raise ValueError(f"unknown speaker {self.speaker!r}")
        if not self.text.strip():
            raise ValueError("turn text must be non-empty")


@dataclass(frozen=True, slots=True)
class Dialogue:
    id: str
    topic: str
    task_tag: str
    domain_tag: str
    turns: tuple[DialogueTurn, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("dialogue id must be non-empty")


def entity_key(text: str) -> str:
    """Normalized index key for an entity string: metric tokens joined by spaces."""
    return " ".join(tokenize_metric(text))


@dataclass(frozen=True)
class KnowledgeStore:
    """Immutable triple collection with an entity index over subjects and objects.

    ``entity_index`` maps the normalized token form of an entity to the ids
    (positions in ``triples``) of every triple where it appears as subject or
    object. Entities that normalize to nothing are unindexable and skipped.
    """

    triples: tuple[KnowledgeTriple, ...]
    entity_index: dict[str, tuple[int, ...]] = field(repr=False)

    @classmethod
    def build(cls, triples) -> "KnowledgeStore":
        """Deduplicate (stable, first occurrence wins) and index the triples."""
        seen: dict[KnowledgeTriple, None] = {}
        for t in triples:
            if t not in seen:
                seen[t] = None
        unique = tuple(seen)
        index: dict[str, set[int]] = {}
        for i, t in enumerate(unique):
            for ent in (t.subject, t.object):
                key = entity_key(ent)
                if key:
                    index.setdefault(key, set()).add(i)
        frozen = {k: tuple(sorted(ids)) for k, ids in index.items()}
        return cls(triples=unique, entity_index=frozen)

    def __len__(self) -> int:
        return len(self.triples)

    def merged_with(self, extra) -> "KnowledgeStore":
        return KnowledgeStore.build(list(self.triples) + list(extra))
