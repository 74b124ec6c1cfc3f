"""DocRED-format corpora: parsing, validation, serialization and label statistics."""

from __future__ import annotations

import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


class CorpusError(ValueError):
    """A document violates the DocRED schema or its own bounds."""


class CorpusParseError(CorpusError):
    """The corpus file is not valid JSON."""


class VocabError(KeyError):
    """A relation code is missing from the vocabulary."""


@dataclass(frozen=True)
class Mention:
    sent_id: int
    start: int
    end: int
    name: str
    type: str


@dataclass(frozen=True)
class Entity:
    mentions: tuple[Mention, ...]

    @property
    def type(self) -> str:
        return self.mentions[0].type

    @property
    def mixed_types(self) -> bool:
        """True when the source gave this entity's mentions different types."""
        return len({m.type for m in self.mentions}) > 1

    @property
    def names(self) -> frozenset[str]:
        return frozenset(m.name for m in self.mentions)


@dataclass(frozen=True)
class RelationFact:
    head: int
    tail: int
    relation: str
    evidence: tuple[int, ...] = ()


@dataclass(frozen=True)
class Document:
    title: str
    sents: tuple[tuple[str, ...], ...]
    entities: tuple[Entity, ...]
    facts: tuple[RelationFact, ...] = ()
    labeled: bool = True

    @property
    def sentence_offsets(self) -> tuple[int, ...]:
        offsets, total = [], 0
        for sent in self.sents:
            offsets.append(total)
            total += len(sent)
        return tuple(offsets)

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(tok for sent in self.sents for tok in sent)

    def mention_span(self, mention: Mention) -> tuple[int, int]:
        """Document-level [start, end) token positions of a mention."""
        off = self.sentence_offsets[mention.sent_id]
        return off + mention.start, off + mention.end


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def counts(self) -> tuple[int, int, int]:
        """(documents, entities, facts)."""
        return (
            len(self.documents),
            sum(len(d.entities) for d in self.documents),
            sum(len(d.facts) for d in self.documents),
        )

    def by_title(self) -> dict[str, Document]:
        return {d.title: d for d in self.documents}


class RelationVocab:
    """Bijection between relation codes and dense indices 0..r-1.

    Indices follow the lexicographic order of the codes. Index ``r`` is
    reserved for the threshold (NA) class and is not a relation.
    """

    def __init__(self, codes: Iterable[str], names: Mapping[str, str] | None = None):
        self.codes: tuple[str, ...] = tuple(sorted(set(codes)))
        self._index = {code: i for i, code in enumerate(self.codes)}
        self.names = dict(names or {})

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, RelationVocab) and self.codes == other.codes

    def __repr__(self) -> str:
        return f"RelationVocab(r={len(self)})"

    @property
    def na_index(self) -> int:
        return len(self.codes)

    def index(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise VocabError(f"relation code {code!r} not in vocabulary") from None

    def code(self, index: int) -> str:
        return self.codes[index]

    def name(self, code: str) -> str:
        return self.names.get(code, code)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _validate(doc: Document) -> None:
    n_sents = len(doc.sents)
    for ei, ent in enumerate(doc.entities):
        if not ent.mentions:
            raise CorpusError(f"{doc.title!r}: entity {ei} has no mentions")
        for m in ent.mentions:
            if not 0 <= m.sent_id < n_sents:
                raise CorpusError(
                    f"{doc.title!r}: entity {ei} mention sent_id {m.sent_id} out of range"
                )
            if not (0 <= m.start < m.end <= len(doc.sents[m.sent_id])):
                raise CorpusError(
                    f"{doc.title!r}: entity {ei} mention span [{m.start}, {m.end}) invalid "
                    f"for sentence {m.sent_id} of length {len(doc.sents[m.sent_id])}"
                )
    n_ent = len(doc.entities)
    for fact in doc.facts:
        if not (0 <= fact.head < n_ent and 0 <= fact.tail < n_ent):
            raise CorpusError(f"{doc.title!r}: fact {fact} addresses a missing entity")
        if fact.head == fact.tail:
            raise CorpusError(f"{doc.title!r}: fact {fact} has head == tail")


def document_from_json(raw: Mapping) -> Document:
    try:
        title = str(raw["title"])
        sents = tuple(tuple(str(tok) for tok in sent) for sent in raw["sents"])
        entities = tuple(
            Entity(
                tuple(
                    Mention(
                        sent_id=int(m["sent_id"]),
                        start=int(m["pos"][0]),
                        end=int(m["pos"][1]),
                        name=str(m["name"]),
                        type=str(m["type"]),
                    )
                    for m in vertex
                )
            )
            for vertex in raw["vertexSet"]
        )
        labeled = "labels" in raw
        facts = tuple(
            RelationFact(
                head=int(lab["h"]),
                tail=int(lab["t"]),
                relation=str(lab["r"]),
                evidence=tuple(int(e) for e in lab.get("evidence", ())),
            )
            for lab in raw.get("labels", ())
        )
    except (KeyError, TypeError, IndexError) as exc:
        title = raw.get("title", "?") if isinstance(raw, Mapping) else "?"
        raise CorpusError(f"{title!r}: malformed document ({exc!r})") from exc
    doc = Document(title, sents, entities, facts, labeled)
    _validate(doc)
    return doc


def document_to_json(doc: Document) -> dict:
    out = {
        "title": doc.title,
        "sents": [list(s) for s in doc.sents],
        "vertexSet": [
            [
                {"name": m.name, "sent_id": m.sent_id, "pos": [m.start, m.end], "type": m.type}
                for m in ent.mentions
            ]
            for ent in doc.entities
        ],
    }
    if doc.labeled:
        out["labels"] = [
            {"h": f.head, "t": f.tail, "r": f.relation, "evidence": list(f.evidence)}
            for f in doc.facts
        ]
    return out


def parse_corpus_text(text: str) -> Corpus:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(
            f"invalid JSON at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}"
        ) from exc
    if not isinstance(raw, list):
        raise CorpusError("corpus must be a JSON array of documents")
    return Corpus([document_from_json(d) for d in raw])


def parse_corpus(path: str | os.PathLike) -> Corpus:
    return parse_corpus_text(Path(path).read_text(encoding="utf-8"))


def corpus_to_json(corpus: Corpus) -> list[dict]:
    return [document_to_json(d) for d in corpus.documents]


def dump_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(corpus_to_json(corpus), ensure_ascii=False), encoding="utf-8")


def load_rel_info(path: str | os.PathLike) -> dict[str, str]:
    return {str(k): str(v) for k, v in json.loads(Path(path).read_text("utf-8")).items()}


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------


def build_label_vocab(corpus: Corpus, rel_info: Mapping[str, str] | None = None) -> RelationVocab:
    return RelationVocab((f.relation for d in corpus for f in d.facts), rel_info)


def entity_pair_codes(doc: Document) -> dict[tuple[int, int], frozenset[str]]:
    groups: dict[tuple[int, int], set[str]] = defaultdict(set)
    for f in doc.facts:
        groups[(f.head, f.tail)].add(f.relation)
    return {pair: frozenset(codes) for pair, codes in groups.items()}


def entity_pair_labels(doc: Document, vocab: RelationVocab) -> dict[tuple[int, int], frozenset[int]]:
    """Map each (head, tail) with at least one fact to its set of relation indices."""
    return {
        pair: frozenset(vocab.index(c) for c in codes)
        for pair, codes in entity_pair_codes(doc).items()
    }


@dataclass(frozen=True)
class LabelStats:
    histogram: dict[int, int]
    multi_label_fraction: float
    no_pairs: bool
    pairs: int
    assignments: int

    @property
    def max_size(self) -> int:
        return max(self.histogram, default=0)


def multi_label_stats(corpus: Corpus) -> LabelStats:
    """Histogram of label-set sizes over entity pairs with at least one fact.

    With no such pairs the fraction is reported as 0 and ``no_pairs`` is set.
    """
    sizes = Counter(len(s) for d in corpus for s in entity_pair_codes(d).values())
    pairs = sum(sizes.values())
    multi = sum(c for k, c in sizes.items() if k >= 2)
    return LabelStats(
        histogram=dict(sorted(sizes.items())),
        multi_label_fraction=multi / pairs if pairs else 0.0,
        no_pairs=pairs == 0,
        pairs=pairs,
        assignments=sum(k * c for k, c in sizes.items()),
    )
