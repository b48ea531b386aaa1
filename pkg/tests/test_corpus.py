from __future__ import annotations

import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kground import (
    CascadeConfig,
    Dialogue,
    DialogueTurn,
    FormatError,
    KnowledgeStore,
    KnowledgeTriple,
    MixSpec,
    TrainingExample,
    build_corpus,
    build_example,
    canonical_text,
    coverage_stats,
    emit_corpus,
    lexical_provider,
    load_corpus,
    mix_knowledge,
    sample_few_shot,
    tokenize_length,
)
from kground.corpus import build_corpus_audited, example_to_json

from . import synth


def two_turn_dialogue(response="he went to columbia", context="tell me about obama"):
    return Dialogue(
        id="d1",
        topic="Barack Obama",
        task_tag="chat",
        domain_tag="wiki",
        turns=(DialogueTurn("seeker", context), DialogueTurn("responder", response)),
    )


TRIPLE = KnowledgeTriple("Barack Obama", "alma mater", "Columbia University")


# --- build_example ---


def test_build_example_format():
    ex = build_example(two_turn_dialogue(), 1, [TRIPLE], max_len=512, origin="golden")
    assert ex.input_text == (
        "context: seeker: tell me about obama "
        "knowledge: Barack Obama | alma mater | Columbia University"
    )
    assert ex.target_text == "he went to columbia"
    assert ex.knowledge_origin == "golden"


def test_build_example_empty_knowledge_omits_segment():
    ex = build_example(two_turn_dialogue(), 1, [], max_len=512)
    assert "knowledge:" not in ex.input_text
    assert ex.knowledge_origin == "none"


def test_build_example_rejects_non_responder_turn():
    with pytest.raises(ValueError):
        build_example(two_turn_dialogue(), 0, [TRIPLE], max_len=512)
    with pytest.raises(ValueError):
        build_example(two_turn_dialogue(), 7, [TRIPLE], max_len=512)


def test_build_example_oversized_knowledge_errors():
    big = KnowledgeTriple("s", "r", " ".join(f"w{i}" for i in range(600)))
    with pytest.raises(ValueError, match="knowledge segment"):
        build_example(two_turn_dialogue(), 1, [big], max_len=512)


def long_dialogue(n_context=10, words_per_turn=10):
    turns = []
    for i in range(n_context):
        speaker = "seeker" if i % 2 == 0 else "responder"
        turns.append(DialogueTurn(speaker, " ".join(f"t{i}w{j}" for j in range(words_per_turn))))
    turns.append(DialogueTurn("responder", "final answer"))
    return Dialogue("long", "topic", "chat", "wiki", tuple(turns))


def test_build_example_truncation_boundary():
    d = long_dialogue(n_context=10, words_per_turn=10)
    # each context piece is 11 length-tokens ("<speaker>:" + 10 words); the
    # fixed part is "context:" (1) + "knowledge: s | r | o" (6) = 7
    triple = KnowledgeTriple("s", "r", "o")
    ex = build_example(d, 10, [triple], max_len=7 + 11 * 4)
    assert len(tokenize_length(ex.input_text)) == 7 + 11 * 4
    assert "t6w0" in ex.input_text and "t5w9" not in ex.input_text
    # one token less forces dropping one more whole turn
    ex = build_example(d, 10, [triple], max_len=7 + 11 * 4 - 1)
    assert len(tokenize_length(ex.input_text)) == 7 + 11 * 3
    assert "t6w0" not in ex.input_text and "t7w0" in ex.input_text


def test_build_example_truncation_keeps_suffix():
    d = long_dialogue(n_context=8, words_per_turn=6)
    ex = build_example(d, 8, [], max_len=30)
    kept = [i for i in range(8) if f"t{i}w0" in ex.input_text]
    assert kept == list(range(min(kept), 8))


def test_build_example_never_drops_knowledge():
    d = long_dialogue(n_context=6, words_per_turn=50)
    triple = KnowledgeTriple("keep", "this", "fact")
    ex = build_example(d, 6, [triple], max_len=10)
    assert "knowledge: keep | this | fact" in ex.input_text
    assert ex.input_text.startswith("context:")


def test_training_example_origin_invariant():
    with pytest.raises(ValueError):
        TrainingExample("d", 0, "context:", "t", (), "golden")
    with pytest.raises(ValueError):
        TrainingExample("d", 0, "context:", "t", (TRIPLE,), "none")


# --- build_corpus ---


def test_golden_passthrough_one_example_per_labeled_turn():
    dialogues = synth.make_labeled_dialogues(3)
    out = build_corpus(dialogues, None, None, CascadeConfig(), "golden-passthrough")
    assert len(out) == 3
    assert all(e.knowledge_origin == "golden" for e in out)
    assert all(len(e.knowledge) == 1 for e in out)


def test_cascade_mode_grounded_turns_only():
    store = synth.make_store(4, 6)
    dialogues = synth.make_dialogues(8, 4, 6, seed=3)
    examples, audits = build_corpus_audited(
        dialogues, store, lexical_provider(), CascadeConfig(), "cascade"
    )
    assert len(audits) == sum(
        1 for d in dialogues for t in d.turns if t.speaker == "responder"
    )
    grounded_keys = {(a.dialogue_id, a.turn_index) for a in audits if a.grounded}
    assert {(e.dialogue_id, e.turn_index) for e in examples} == grounded_keys
    assert 0 < len(examples) < len(audits)
    for e in examples:
        assert e.audit is not None
        assert e.audit[2] == len(e.knowledge)
        assert e.knowledge_origin == "retrieved"
        assert "knowledge:" in e.input_text
        for k in e.knowledge:
            assert canonical_text(k) in e.input_text


def test_cascade_mode_threshold_filters_everything_at_impossible_bar():
    store = synth.make_store(2, 4)
    dialogues = synth.make_dialogues(4, 2, 4)
    cfg = CascadeConfig(sem_threshold=1.1)
    out = build_corpus(dialogues, store, lexical_provider(), cfg, "cascade")
    assert out == []


def test_cascade_mode_deterministic_across_threads():
    store = synth.make_store(3, 5)
    dialogues = synth.make_dialogues(12, 3, 5, seed=9)
    runs = [
        build_corpus(dialogues, store, lexical_provider(), CascadeConfig(), "cascade", threads=t)
        for t in (1, 4)
    ]
    assert runs[0] == runs[1]


class ExplodingProvider:
    name = "exploding"

    def score(self, a, b):
        raise RuntimeError("no scores today")


def test_cascade_mode_provider_error_aborts():
    store = synth.make_store(2, 3)
    dialogues = synth.make_dialogues(2, 2, 3)
    from kground import ProviderError

    with pytest.raises(ProviderError):
        build_corpus(dialogues, store, ExplodingProvider(), CascadeConfig(), "cascade")


# --- mix_knowledge ---


def aligned_corpora(n=20):
    golden, retrieved = [], []
    for i in range(n):
        golden.append(
            TrainingExample(
                f"d{i}", 1, f"context: g{i} knowledge: s | r | g{i}", f"resp {i}",
                (KnowledgeTriple("s", "r", f"g{i}"),), "golden",
            )
        )
        retrieved.append(
            TrainingExample(
                f"d{i}", 1, f"context: r{i} knowledge: s | r | r{i}", f"resp {i}",
                (KnowledgeTriple("s", "r", f"r{i}"),), "retrieved",
            )
        )
    return golden, retrieved


def test_mix_boundaries_match_inputs_modulo_origin():
    golden, retrieved = aligned_corpora(10)
    all_retrieved = mix_knowledge(golden, retrieved, MixSpec(0, seed=1))
    assert [replace(e, knowledge_origin="retrieved") for e in all_retrieved] == retrieved
    assert {e.knowledge_origin for e in all_retrieved} == {"mixed-retrieved"}
    all_golden = mix_knowledge(golden, retrieved, MixSpec(100, seed=1))
    assert [replace(e, knowledge_origin="golden") for e in all_golden] == golden
    assert {e.knowledge_origin for e in all_golden} == {"mixed-golden"}


def test_mix_exact_count_p50():
    golden, retrieved = aligned_corpora(1000)
    mixed = mix_knowledge(golden, retrieved, MixSpec(50, seed=7))
    assert sum(1 for e in mixed if e.knowledge_origin == "mixed-golden") == 500


def test_mix_deterministic_given_seed():
    golden, retrieved = aligned_corpora(50)
    a = mix_knowledge(golden, retrieved, MixSpec(40, seed=3))
    b = mix_knowledge(golden, retrieved, MixSpec(40, seed=3))
    c = mix_knowledge(golden, retrieved, MixSpec(40, seed=4))
    assert a == b
    assert a != c


def test_mix_misaligned_inputs_error_lists_keys():
    golden, retrieved = aligned_corpora(4)
    with pytest.raises(ValueError, match="missing from golden"):
        mix_knowledge(golden[:3], retrieved, MixSpec(50, seed=1))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=100), st.integers(min_value=1, max_value=80), st.integers())
def test_mix_count_matches_round_for_any_p_and_n(p, n, seed):
    golden, retrieved = aligned_corpora(n)
    mixed = mix_knowledge(golden, retrieved, MixSpec(p, seed=seed))
    got = sum(1 for e in mixed if e.knowledge_origin == "mixed-golden")
    assert got == round(p * n / 100)


# --- sample_few_shot ---


def topic_corpus(n_dialogues=100, n_topics=100):
    return [
        Dialogue(
            f"d{i}",
            f"topic {i % n_topics}",
            "chat",
            "wiki",
            (DialogueTurn("seeker", "hi"), DialogueTurn("responder", "hello")),
        )
        for i in range(n_dialogues)
    ]


def test_sample_distinct_topics():
    out = sample_few_shot(topic_corpus(), 10, seed=1)
    assert len(out) == 10
    assert len({d.topic for d in out}) == 10


def test_sample_saturation_uses_every_topic():
    corpus = topic_corpus(n_dialogues=40, n_topics=20)
    out = sample_few_shot(corpus, 20, seed=5)
    assert {d.topic for d in out} == {d.topic for d in corpus}


def test_sample_deterministic_and_seed_sensitive():
    corpus = topic_corpus()
    assert sample_few_shot(corpus, 10, seed=2) == sample_few_shot(corpus, 10, seed=2)
    assert sample_few_shot(corpus, 10, seed=2) != sample_few_shot(corpus, 10, seed=3)


def test_sample_insufficient_topics_reports_deficit():
    corpus = topic_corpus(n_dialogues=10, n_topics=5)
    with pytest.raises(ValueError, match="5"):
        sample_few_shot(corpus, 8, seed=1)


# --- coverage ---


def test_coverage_half():
    store = KnowledgeStore.build(
        [KnowledgeTriple(f"subject {i}", "r", f"o{i}") for i in range(6)]
    )
    dialogues = [
        Dialogue(f"d{i}", f"Subject {i}", "chat", "wiki",
                 (DialogueTurn("responder", "x"),))
        for i in range(3)
    ]
    assert coverage_stats(dialogues, store) == pytest.approx(50.0)


def test_coverage_zero_overlap():
    store = KnowledgeStore.build([KnowledgeTriple("a", "r", "b")])
    dialogues = [Dialogue("d", "zzz", "chat", "wiki", (DialogueTurn("responder", "x"),))]
    assert coverage_stats(dialogues, store) == 0.0


def test_coverage_empty_store_errors():
    with pytest.raises(ValueError):
        coverage_stats([], KnowledgeStore.build([]))


# --- persistence ---


def examples_fixture():
    return [
        TrainingExample(
            "d1", 1, "context: seeker: hi knowledge: a | r | b", "resp one",
            (KnowledgeTriple("a", "r", "b", source_tag="labeled"),), "golden",
        ),
        TrainingExample("d2", 3, "context: seeker: yo", "resp two", (), "none"),
        TrainingExample(
            "d3", 1, "context: seeker: hey knowledge: c | r | d", "resp three",
            (KnowledgeTriple("c", "r", "d", source_tag="labeled"),), "retrieved",
            audit=(120, 50, 3),
        ),
    ]


def test_corpus_round_trip(tmp_path):
    path = tmp_path / "corpus.jsonl"
    examples = examples_fixture()
    emit_corpus(examples, path)
    loaded = load_corpus(path)
    # origin and audit round-trip exactly; loaded triples carry the labeled tag
    assert [replace(e, knowledge=e.knowledge) for e in loaded] == [
        replace(
            e,
            knowledge=tuple(
                KnowledgeTriple(k.subject, k.relation, k.object, "labeled") for k in e.knowledge
            ),
        )
        for e in examples
    ]
    # wire-level round trip is exact for every example
    assert [example_to_json(e) for e in loaded] == [example_to_json(e) for e in examples]


def test_corpus_emission_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    emit_corpus(examples_fixture(), a)
    emit_corpus(examples_fixture(), b)
    assert a.read_bytes() == b.read_bytes()


def test_corpus_schema_fields(tmp_path):
    path = tmp_path / "corpus.jsonl"
    emit_corpus(examples_fixture(), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    first = json.loads(lines[0])
    assert list(first) == ["did", "turn", "input", "target", "knowledge", "origin"]
    assert first["knowledge"] == [["a", "r", "b"]]
    third = json.loads(lines[2])
    assert third["audit"] == [120, 50, 3]


def test_corpus_truncated_file_parse_error_names_lines(tmp_path):
    path = tmp_path / "corpus.jsonl"
    emit_corpus(examples_fixture(), path)
    text = path.read_text(encoding="utf-8")
    path.write_text(text[: len(text) - 40], encoding="utf-8")
    with pytest.raises(FormatError, match=r":3:.*last good line was 2"):
        load_corpus(path)
