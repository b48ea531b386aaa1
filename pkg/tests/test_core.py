from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kground import (
    KnowledgeStore,
    KnowledgeTriple,
    canonical_text,
    entity_key,
    normalize_field,
    tokenize_length,
    tokenize_metric,
)

def _splits_cleanly(s: str) -> bool:
    # fields whose trimmed form abuts the " | " joiner ambiguously ("x |",
    # "| x") corrupt the split even without containing " | " themselves
    trimmed = s.strip()
    return (
        bool(trimmed)
        and " | " not in trimmed
        and not trimmed.endswith(" |")
        and not trimmed.startswith("| ")
    )


FIELD_TEXT = st.text(
    alphabet=st.characters(blacklist_characters="\t\n\r", blacklist_categories=("Cs",)),
    min_size=1,
).filter(_splits_cleanly)


def test_tokenize_metric_examples():
    assert tokenize_metric("") == []
    assert tokenize_metric("Barack Obama's alma-mater.") == [
        "barack",
        "obama",
        "s",
        "alma",
        "mater",
    ]
    assert tokenize_metric("The  Matrix (1999)!") == ["the", "matrix", "1999"]


def test_tokenize_metric_drops_underscores_and_normalizes_unicode():
    assert tokenize_metric("snake_case") == ["snake", "case"]
    # NFKC folds the ligature and fullwidth forms
    assert tokenize_metric("ﬁlm Ｎｏ１") == ["film", "no1"]


def test_tokenize_length_examples():
    assert tokenize_length("a b  c") == ["a", "b", "c"]
    assert tokenize_length("knowledge: X | r | Y") == ["knowledge:", "X", "|", "r", "|", "Y"]
    assert tokenize_length("") == []


def test_canonical_text_examples():
    t = KnowledgeTriple("Barack Obama", "alma mater", "Columbia University")
    assert canonical_text(t) == "Barack Obama | alma mater | Columbia University"
    t = KnowledgeTriple("Michelle Obama", "spouse", "Barack Obama")
    assert canonical_text(t) == "Michelle Obama | spouse | Barack Obama"
    assert canonical_text(KnowledgeTriple("a", "r", "b")) == "a | r | b"


def test_triple_rejects_empty_and_control_fields():
    with pytest.raises(ValueError):
        KnowledgeTriple("", "r", "o")
    with pytest.raises(ValueError):
        KnowledgeTriple("s", "  ", "o")
    with pytest.raises(ValueError):
        KnowledgeTriple("s", "r", "o\tbad")
    with pytest.raises(ValueError):
        KnowledgeTriple("s", "r\nr", "o")
    with pytest.raises(ValueError):
        KnowledgeTriple("s", "r", "o", source_tag="nope")


def test_normalize_field_collapses_tabs_and_newlines():
    assert normalize_field("a\tb\nc") == "a b c"
    assert normalize_field("  padded \t ") == "padded"


@given(FIELD_TEXT, FIELD_TEXT, FIELD_TEXT)
def test_canonical_text_round_trips(s, r, o):
    t = KnowledgeTriple(s, r, o)
    parts = canonical_text(t).split(" | ")
    assert parts == [s.strip(), r.strip(), o.strip()]


@given(FIELD_TEXT, FIELD_TEXT, FIELD_TEXT)
def test_metric_tokens_of_canonical_text_concatenate(s, r, o):
    t = KnowledgeTriple(s, r, o)
    assert tokenize_metric(canonical_text(t)) == (
        tokenize_metric(s) + tokenize_metric(r) + tokenize_metric(o)
    )


@given(st.text())
def test_tokenizers_are_pure(text):
    assert tokenize_metric(text) == tokenize_metric(text)
    assert tokenize_length(text) == tokenize_length(text)


def test_canonical_text_injective_on_clean_fields():
    a = KnowledgeTriple("x", "r", "y z")
    b = KnowledgeTriple("x", "r y", "z")
    assert canonical_text(a) != canonical_text(b)


def test_store_build_dedups_and_indexes():
    t1 = KnowledgeTriple("Barack Obama", "spouse", "Michelle Obama")
    t2 = KnowledgeTriple("Barack Obama", "alma mater", "Columbia University")
    store = KnowledgeStore.build([t1, t2, t1])
    assert len(store) == 2
    assert store.triples == (t1, t2)
    ids = store.entity_index[entity_key("Barack Obama")]
    assert set(ids) == {0, 1}
    assert store.entity_index[entity_key("Michelle Obama")] == (0,)


def test_store_subject_lookup_contains_own_triple():
    triples = [KnowledgeTriple(f"subj {i}", "rel", f"obj {i}") for i in range(20)]
    store = KnowledgeStore.build(triples)
    for i, t in enumerate(store.triples):
        assert i in store.entity_index[entity_key(t.subject)]


def test_store_merge_dedups():
    t1 = KnowledgeTriple("a", "r", "b")
    t2 = KnowledgeTriple("c", "r", "d")
    store = KnowledgeStore.build([t1]).merged_with([t1, t2])
    assert store.triples == (t1, t2)
