import json

import pytest

from lace.docred import Corpus, Document, Entity, Mention, RelationFact, parse_corpus_text


def make_doc(title, label_sets, n_entities=None):
    """Document whose pair (0, k) carries the k-th label set; one token per entity."""
    n = n_entities or len(label_sets) + 1
    sents = (tuple(f"tok{i}" for i in range(n)),)
    entities = tuple(Entity((Mention(0, i, i + 1, f"{title}-e{i}", "PER"),)) for i in range(n))
    facts = tuple(
        RelationFact(0, k + 1, code) for k, codes in enumerate(label_sets) for code in sorted(codes)
    )
    return Document(title, sents, entities, facts)


def corpus_from_sets(label_sets, per_doc=3):
    docs = []
    for start in range(0, len(label_sets), per_doc):
        chunk = label_sets[start : start + per_doc]
        docs.append(make_doc(f"d{start}", chunk))
    return Corpus(docs)


MINIMAL = [
    {
        "title": "Wisconsin",
        "sents": [["Wisconsin", "is", "a", "state", "of", "the", "U.S.", "."]],
        "vertexSet": [
            [{"name": "Wisconsin", "sent_id": 0, "pos": [0, 1], "type": "LOC"}],
            [{"name": "U.S.", "sent_id": 0, "pos": [6, 7], "type": "LOC"}],
        ],
        "labels": [{"h": 0, "t": 1, "r": "P17", "evidence": [0]}],
    }
]


@pytest.fixture
def minimal_corpus():
    return parse_corpus_text(json.dumps(MINIMAL))


@pytest.fixture
def minimal_json():
    return json.loads(json.dumps(MINIMAL))
