"""Relation co-occurrence graph built from training label sets.

Pipeline: counts C -> conditional probabilities P (rare counts filtered by
``tau``) -> binary adjacency B (``P >= delta`` plus self-loops) -> re-weighted
adjacency R, where every node keeps ``1 - p`` on itself and spreads ``p``
evenly over its out-neighbours.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .docred import Corpus, RelationVocab, entity_pair_labels

DEFAULT_TAU = 10
DEFAULT_DELTA = 0.05
DEFAULT_P = 0.3


def count_cooccurrence(corpus: Corpus, vocab: RelationVocab) -> np.ndarray:
    """Symmetric r x r counts of entity pairs whose label set holds both relations."""
    r = len(vocab)
    C = np.zeros((r, r), dtype=np.int64)
    for doc in corpus:
        for labels in entity_pair_labels(doc, vocab).values():
            idx = np.fromiter(sorted(labels), dtype=np.int64)
            if idx.size < 2:
                continue
            C[np.ix_(idx, idx)] += 1
    np.fill_diagonal(C, 0)
    return C


def conditional_matrix(C: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Row-normalize counts after zeroing entries below ``tau``; empty rows stay zero."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    kept = np.where(C >= tau, C, 0).astype(np.float64)
    totals = kept.sum(axis=1, keepdims=True)
    return np.divide(kept, totals, out=np.zeros_like(kept), where=totals > 0)


def binarize(P: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    B = (P >= delta).astype(np.int64)
    np.fill_diagonal(B, 1)
    return B


def reweight(B: np.ndarray, p: float = DEFAULT_P) -> np.ndarray:
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    off = B.astype(np.float64).copy()
    np.fill_diagonal(off, 0.0)
    degree = off.sum(axis=1, keepdims=True)
    R = np.divide(p * off, degree, out=np.zeros_like(off), where=degree > 0)
    np.fill_diagonal(R, 1.0 - p)
    return R


@dataclass
class CorrelationGraph:
    relations: tuple[str, ...]
    C: np.ndarray
    P: np.ndarray
    B: np.ndarray
    R: np.ndarray
    tau: float = DEFAULT_TAU
    delta: float = DEFAULT_DELTA
    p: float = DEFAULT_P

    @classmethod
    def build(
        cls,
        corpus: Corpus,
        vocab: RelationVocab,
        tau: float = DEFAULT_TAU,
        delta: float = DEFAULT_DELTA,
        p: float = DEFAULT_P,
    ) -> "CorrelationGraph":
        C = count_cooccurrence(corpus, vocab)
        P = conditional_matrix(C, tau)
        B = binarize(P, delta)
        return cls(vocab.codes, C, P, B, reweight(B, p), tau, delta, p)

    @property
    def r(self) -> int:
        return len(self.relations)

    @property
    def edge_count(self) -> int:
        """Directed off-diagonal edges."""
        return int(self.B.sum() - np.trace(self.B)) if self.r else 0

    @property
    def density(self) -> float:
        possible = self.r * (self.r - 1)
        return self.edge_count / possible if possible else 0.0

    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (i, j, float(self.R[i, j]))
            for i in range(self.r)
            for j in range(self.r)
            if i != j and self.R[i, j] > 0
        ]

    def top_asymmetric_pairs(self, k: int = 10) -> list[tuple[str, str, float, float]]:
        """Pairs (a, b, P(b|a), P(a|b)) ranked by |P(b|a) - P(a|b)|."""
        rows = []
        for i, j in combinations(range(self.r), 2):
            if self.C[i, j] == 0:
                continue
            a, b = float(self.P[i, j]), float(self.P[j, i])
            if a < b:
                rows.append((self.relations[j], self.relations[i], b, a))
            else:
                rows.append((self.relations[i], self.relations[j], a, b))
        rows.sort(key=lambda row: (-(row[2] - row[3]), row[0], row[1]))
        return rows[:k]

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "relations": list(self.relations),
            "C": self.C.tolist(),
            "P": self.P.tolist(),
            "B": self.B.tolist(),
            "R": self.R.tolist(),
            "tau": self.tau,
            "delta": self.delta,
            "p": self.p,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "CorrelationGraph":
        r = int(raw["r"])

        def mat(key, dtype):
            return np.array(raw[key], dtype=dtype).reshape(r, r)

        return cls(
            tuple(raw["relations"]),
            mat("C", np.int64),
            mat("P", np.float64),
            mat("B", np.int64),
            mat("R", np.float64),
            raw["tau"],
            raw["delta"],
            raw["p"],
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CorrelationGraph":
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))

    def to_tsv(self) -> str:
        lines = ["head\ttail\tweight"]
        lines += [f"{self.relations[i]}\t{self.relations[j]}\t{w!r}" for i, j, w in self.edges()]
        return "\n".join(lines) + "\n"

    def to_dot(self, names: dict[str, str] | None = None) -> str:
        names = names or {}
        lines = ["digraph relations {"]
        for code in self.relations:
            label = names.get(code, code).replace('"', '\\"')
            lines.append(f'  "{code}" [label="{label}"];')
        for i, j, w in self.edges():
            lines.append(f'  "{self.relations[i]}" -> "{self.relations[j]}" [label="{w:.3f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def export_graph(
    graph: CorrelationGraph,
    path: str | os.PathLike,
    fmt: str = "json",
    names: dict[str, str] | None = None,
) -> None:
    if fmt == "json":
        graph.save(path)
    elif fmt == "tsv":
        Path(path).write_text(graph.to_tsv(), encoding="utf-8")
    elif fmt == "dot":
        Path(path).write_text(graph.to_dot(names), encoding="utf-8")
    else:
        raise ValueError(f"unknown graph format {fmt!r} (json, tsv, dot)")
