"""Document encoder: word+type embeddings, BiLSTM, mention max-pool, entity log-sum-exp pool."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, Tensor
from .docred import Corpus, Document

UNK = "<unk>"
NO_TYPE = "<none>"


@dataclass(frozen=True)
class EncoderConfig:
    d_word: int = 100
    d_type: int = 20
    d_hidden: int = 128
    layers: int = 1
    lowercase: bool = True

    @property
    def d_out(self) -> int:
        return 2 * self.d_hidden


class TokenVocab:
    """String -> row index with a reserved row 0 (UNK for words, "none" for types)."""

    def __init__(self, items: Iterable[str], reserved: str = UNK):
        self.items: tuple[str, ...] = (reserved,) + tuple(sorted(set(items) - {reserved}))
        self._index = {s: i for i, s in enumerate(self.items)}

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, item: str) -> int:
        return self._index.get(item, 0)

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenVocab) and self.items == other.items

    @classmethod
    def words(cls, corpus: Corpus, lowercase: bool = True, min_count: int = 1) -> "TokenVocab":
        counts = Counter(
            tok.lower() if lowercase else tok for d in corpus for s in d.sents for tok in s
        )
        return cls((w for w, c in counts.items() if c >= min_count), UNK)

    @classmethod
    def types(cls, corpus: Corpus) -> "TokenVocab":
        return cls((m.type for d in corpus for e in d.entities for m in e.mentions), NO_TYPE)


@dataclass(frozen=True)
class PreparedDocument:
    """Index arrays for one document; built once, reused every epoch."""

    title: str
    word_ids: np.ndarray
    type_ids: np.ndarray
    mention_spans: tuple[tuple[tuple[int, int], ...], ...]


def prepare_document(
    doc: Document, words: TokenVocab, types: TokenVocab, lowercase: bool = True
) -> PreparedDocument:
    toks = doc.tokens
    word_ids = np.array([words[t.lower() if lowercase else t] for t in toks], dtype=np.int64)
    type_ids = np.zeros(len(toks), dtype=np.int64)
    spans = []
    for ent in doc.entities:
        ent_spans = []
        for m in ent.mentions:
            start, end = doc.mention_span(m)
            type_ids[start:end] = types[m.type]
            ent_spans.append((start, end))
        spans.append(tuple(ent_spans))
    return PreparedDocument(doc.title, word_ids, type_ids, tuple(spans))


def init_encoder_params(
    rng: np.random.Generator, n_words: int, n_types: int, cfg: EncoderConfig
) -> dict[str, Tensor]:
    params = {
        "word_emb": Tensor(ad.truncated_normal(rng, (n_words, cfg.d_word)), "word_emb"),
        "type_emb": Tensor(ad.truncated_normal(rng, (n_types, cfg.d_type)), "type_emb"),
    }
    d_in = cfg.d_word + cfg.d_type
    h = cfg.d_hidden
    for layer in range(cfg.layers):
        for direction in ("fw", "bw"):
            name = f"lstm{layer}_{direction}"
            w = ad.glorot_uniform(rng, (d_in + h, 4 * h), fan_in=d_in + h, fan_out=h)
            params[f"{name}_W"] = Tensor(w, f"{name}_W")
            params[f"{name}_b"] = Tensor(np.zeros(4 * h), f"{name}_b")
        d_in = 2 * h
    return params


def load_embeddings(path: str | os.PathLike, words: TokenVocab, table: np.ndarray) -> int:
    """Overwrite rows of ``table`` from a text embedding file; returns rows hit."""
    hits = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != table.shape[1] + 1:
                continue
            idx = words[parts[0]]
            if idx == 0 and parts[0] != UNK:
                continue
            table[idx] = np.asarray(parts[1:], dtype=np.float64)
            hits += 1
    return hits


def embed_tokens(prepared: PreparedDocument, params: dict[str, Tensor]) -> Tensor:
    return ad.concat(
        [params["word_emb"][prepared.word_ids], params["type_emb"][prepared.type_ids]], axis=1
    )


def bilstm_encode(seq: Tensor, params: dict[str, Tensor], layers: int = 1) -> Tensor:
    """(l, d_in) -> (l, 2·d_h): forward and backward states concatenated per position."""
    if seq.shape[0] == 0:
        raise DomainError("cannot encode an empty sequence")
    h = seq
    for layer in range(layers):
        fw = ad.lstm_sequence(h, params[f"lstm{layer}_fw_W"], params[f"lstm{layer}_fw_b"])
        bw = ad.lstm_sequence(
            h, params[f"lstm{layer}_bw_W"], params[f"lstm{layer}_bw_b"], reverse=True
        )
        h = ad.concat([fw, bw], axis=1)
    return h


def mention_pool(states: Tensor, start: int, end: int) -> Tensor:
    if not 0 <= start < end <= states.shape[0]:
        raise DomainError(f"mention span [{start}, {end}) empty or out of range")
    if end - start == 1:
        return states[start]
    return ad.tmax(states[start:end], axis=0)


def entity_pool(mentions: Sequence[Tensor]) -> Tensor:
    if not mentions:
        raise DomainError("entity has no mentions")
    if len(mentions) == 1:
        return mentions[0]
    return ad.logsumexp(ad.stack(mentions), axis=0)


def encode_entities(
    prepared: PreparedDocument, params: dict[str, Tensor], layers: int = 1
) -> Tensor:
    """(n_entities, d_B) entity embeddings for one document."""
    states = bilstm_encode(embed_tokens(prepared, params), params, layers)
    ents = [
        entity_pool([mention_pool(states, s, e) for s, e in spans])
        for spans in prepared.mention_spans
    ]
    return ad.stack(ents)
