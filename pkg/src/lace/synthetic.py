"""Synthetic DocRED-style corpora with planted relation correlations.

A *world* fixes the vocabulary and a table mapping (head cue, tail cue) to a
label set; documents drawn from the same world share that table, so a train
and a held-out corpus can be generated with different document seeds. Every
mention is rendered as ``<cue> <name>`` with the span covering the name, so the
relation is recoverable from the encoder's context.

Label sets come from templates that make correlated relations co-occur:
neighbouring relation pairs ``{2k, 2k+1}`` are frequent, and triples
``{3k, 3k+1, 3k+2}`` appear occasionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .docred import Corpus, Document, Entity, Mention, RelationFact

TYPES = ("PER", "ORG", "LOC")


def label_templates(n_relations: int) -> list[frozenset[str]]:
    code = lambda i: f"R{i}"  # noqa: E731
    templates = [frozenset({code(i)}) for i in range(n_relations)]
    for i in range(0, n_relations - 1, 2):
        pair = frozenset({code(i), code(i + 1)})
        templates += [pair, pair]
    for i in range(0, n_relations - 2, 3):
        templates.append(frozenset({code(i), code(i + 1), code(i + 2)}))
    return templates


@dataclass(frozen=True)
class World:
    n_relations: int
    vocab_size: int
    cues: tuple[str, ...]
    names: tuple[str, ...]
    filler: tuple[str, ...]
    table: dict[tuple[int, int], frozenset[str]]


def make_world(
    n_relations: int = 6,
    vocab_size: int = 100,
    n_cues: int = 8,
    na_rate: float = 0.4,
    seed: int = 0,
) -> World:
    if vocab_size < n_cues + 10:
        raise ValueError("vocabulary too small for the requested cue set")
    rng = np.random.default_rng(seed)
    words = [f"w{i:03d}" for i in range(vocab_size)]
    cues = tuple(words[:n_cues])
    n_names = max(8, (vocab_size - n_cues) // 3)
    names = tuple(words[n_cues : n_cues + n_names])
    filler = tuple(words[n_cues + n_names :])
    templates = label_templates(n_relations)
    cue_pairs = [(a, b) for a in range(n_cues) for b in range(n_cues) if a != b]
    order = rng.permutation(len(cue_pairs))
    n_labeled = int(round(len(cue_pairs) * (1 - na_rate)))
    table = {}
    for rank, idx in enumerate(order[:n_labeled]):
        # cycle the template list first so every template is used
        pick = rank if rank < len(templates) else int(rng.integers(len(templates)))
        table[cue_pairs[idx]] = templates[pick]
    return World(n_relations, vocab_size, cues, names, filler, table)


def make_document(world: World, rng: np.random.Generator, title: str, n_entities: int = 4) -> Document:
    cue_ids = rng.choice(len(world.cues), size=n_entities, replace=False)
    name_ids = rng.choice(len(world.names), size=n_entities, replace=False)
    n_sents = int(rng.integers(2, 4))
    sents: list[list[str]] = [[] for _ in range(n_sents)]
    placements = []  # (sentence, entity)
    for e in range(n_entities):
        for _ in range(int(rng.integers(1, 3))):
            placements.append((int(rng.integers(n_sents)), e))
    rng.shuffle(placements)
    mentions: list[list[Mention]] = [[] for _ in range(n_entities)]
    ent_types = [TYPES[int(rng.integers(len(TYPES)))] for _ in range(n_entities)]
    for s, e in placements:
        sent = sents[s]
        sent.extend(rng.choice(world.filler, size=int(rng.integers(1, 4))).tolist())
        sent.append(world.cues[cue_ids[e]])
        name = world.names[name_ids[e]]
        mentions[e].append(Mention(s, len(sent), len(sent) + 1, name, ent_types[e]))
        sent.append(name)
    for sent in sents:
        sent.extend(rng.choice(world.filler, size=int(rng.integers(1, 3))).tolist())
    facts = []
    for h in range(n_entities):
        for t in range(n_entities):
            if h == t:
                continue
            for code in sorted(world.table.get((int(cue_ids[h]), int(cue_ids[t])), ())):
                sent_ids = sorted({m.sent_id for m in mentions[h] + mentions[t]})
                facts.append(RelationFact(h, t, code, tuple(sent_ids)))
    return Document(
        title,
        tuple(tuple(s) for s in sents),
        tuple(Entity(tuple(ms)) for ms in mentions),
        tuple(facts),
    )


def make_corpus(
    world: World, n_docs: int = 50, seed: int = 0, n_entities: int = 4, prefix: str = "doc"
) -> Corpus:
    rng = np.random.default_rng(seed)
    return Corpus([make_document(world, rng, f"{prefix}-{i:04d}", n_entities) for i in range(n_docs)])


def planted_corpus(
    n_docs: int = 50, n_relations: int = 6, vocab_size: int = 100, seed: int = 0, world_seed: int = 0
) -> Corpus:
    """Convenience wrapper: one world, one corpus."""
    return make_corpus(make_world(n_relations, vocab_size, seed=world_seed), n_docs, seed)
