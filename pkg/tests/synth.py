"""Synthetic store and dialogue generators shared by unit and acceptance tests."""

from __future__ import annotations

import random

from kground import Dialogue, DialogueTurn, KnowledgeStore, KnowledgeTriple

# responder styles: full echo of one fact, partial echo, unrelated chatter
_STYLES = ("echo", "partial", "offtopic")


def make_store(n_topics: int, per_topic: int) -> KnowledgeStore:
    triples = [
        KnowledgeTriple(f"topic{i}", f"rel{j}", f"object{i} part{j}")
        for i in range(n_topics)
        for j in range(per_topic)
    ]
    return KnowledgeStore.build(triples)


def make_dialogues(
    n_dialogues: int,
    n_topics: int,
    per_topic: int,
    seed: int = 13,
    turns_per_dialogue: int = 4,
) -> list[Dialogue]:
    """Seeker/responder dialogues whose responses echo store facts to varying degrees."""
    rng = random.Random(seed)
    dialogues = []
    for k in range(n_dialogues):
        topic = k % n_topics
        turns = []
        for pos in range(turns_per_dialogue):
            if pos % 2 == 0:
                turns.append(
                    DialogueTurn("seeker", f"tell me more about topic{topic} please")
                )
                continue
            style = _STYLES[rng.randrange(len(_STYLES))]
            j = rng.randrange(per_topic)
            if style == "echo":
                text = f"well topic{topic} rel{j} object{topic} part{j} as you know"
            elif style == "partial":
                text = f"maybe something like object{topic} part{j} i think"
            else:
                text = "honestly i have no idea what to say here today"
            turns.append(DialogueTurn("responder", text))
        dialogues.append(
            Dialogue(
                id=f"d{k}",
                topic=f"topic{topic}",
                task_tag="chat",
                domain_tag="synthetic",
                turns=tuple(turns),
            )
        )
    return dialogues


def make_labeled_dialogues(n: int, seed: int = 5) -> list[Dialogue]:
    """Dialogues whose responder turns carry golden knowledge labels and items."""
    rng = random.Random(seed)
    dialogues = []
    for k in range(n):
        j = rng.randrange(50)
        triple = KnowledgeTriple(f"movie{k}", "has_genre", f"genre{j}", source_tag="labeled")
        turns = (
            DialogueTurn("seeker", f"what do you know about movie{k}"),
            DialogueTurn(
                "responder",
                f"movie{k} is a fine genre{j} film you should watch",
                golden_knowledge=(triple,),
                golden_items=(f"movie{k}",),
            ),
        )
        dialogues.append(
            Dialogue(
                id=f"lab{k}",
                topic=f"movie{k}",
                task_tag="recommend",
                domain_tag="synthetic",
                turns=turns,
            )
        )
    return dialogues
