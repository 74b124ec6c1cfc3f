"""The full relation extractor: encoder, relation propagation and classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .classifier import (
    DEFAULT_ALPHA,
    ClassifierConfig,
    at_loss,
    bilinear_score,
    init_classifier_params,
    mat_loss,
    project,
)
from .docred import Document, RelationVocab, entity_pair_labels
from .encoder import (
    EncoderConfig,
    PreparedDocument,
    TokenVocab,
    encode_entities,
    init_encoder_params,
    prepare_document,
)
from .graph import CorrelationGraph
from .propagation import GatConfig, init_gat_params, init_relation_features, propagate

LOSSES = ("mat", "at")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gat: GatConfig = field(default_factory=GatConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    use_graph: bool = True
    loss: str = "mat"
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def all_pairs(n_entities: int) -> list[tuple[int, int]]:
    return [(s, o) for s in range(n_entities) for o in range(n_entities) if s != o]


def gold_matrix(pairs, labels: dict[tuple[int, int], frozenset[int]], r: int) -> np.ndarray:
    gold = np.zeros((len(pairs), r))
    for row, pair in enumerate(pairs):
        for c in labels.get(pair, ()):
            gold[row, c] = 1.0
    return gold


class LaceModel:
    """Vocabularies, graph and configuration; parameters live in a plain dict.

    Forward functions take the parameter dict explicitly so the same model can
    be evaluated at perturbed parameters (gradient checks) or updated copies
    (training) without mutation.
    """

    def __init__(
        self,
        config: ModelConfig,
        words: TokenVocab,
        types: TokenVocab,
        relations: RelationVocab,
        graph: CorrelationGraph | None,
    ):
        if config.use_graph:
            if graph is None:
                raise ValueError("the correlation module needs a graph")
            if tuple(graph.relations) != relations.codes:
                raise ValueError("graph relations do not match the corpus relation vocabulary")
        self.config = config
        self.words = words
        self.types = types
        self.relations = relations
        self.graph = graph

    @property
    def r(self) -> int:
        return len(self.relations)

    @property
    def d_b(self) -> int:
        return self.config.encoder.d_out

    def init_params(self, seed: int) -> dict[str, Tensor]:
        rng = np.random.default_rng(seed)
        cfg = self.config
        params = init_encoder_params(rng, len(self.words), len(self.types), cfg.encoder)
        if cfg.use_graph:
            params["relation_features"] = init_relation_features(self.r, cfg.gat.d_rel, rng)
            params.update(init_gat_params(rng, cfg.gat, self.d_b))
        else:
            params["relation_features"] = init_relation_features(self.r, self.d_b, rng)
        params.update(init_classifier_params(rng, self.r, self.d_b, cfg.classifier))
        return params

    def prepare(self, doc: Document) -> PreparedDocument:
        return prepare_document(doc, self.words, self.types, self.config.encoder.lowercase)

    def relation_matrix(self, params: dict[str, Tensor]) -> Tensor:
        """Transformed relation features (r, d_B)."""
        feats = params["relation_features"]
        if not self.config.use_graph:
            return feats
        return propagate(feats, self.graph.R, params, self.config.gat, self.d_b)

    def pair_logits(
        self,
        prepared: PreparedDocument,
        pairs: list[tuple[int, int]],
        params: dict[str, Tensor],
        relmat: Tensor,
    ) -> Tensor:
        E = encode_entities(prepared, params, self.config.encoder.layers)
        heads = np.array([s for s, _ in pairs], dtype=np.int64)
        tails = np.array([o for _, o in pairs], dtype=np.int64)
        E_s, E_o = E[heads], E[tails]
        eps = self.config.classifier.ln_eps
        I_s = project(E_s, relmat, params["ln_s_gain"], params["ln_s_bias"], eps)
        I_o = project(E_o, relmat, params["ln_o_gain"], params["ln_o_bias"], eps)
        return bilinear_score(E_s, I_s, E_o, I_o, params["bilinear_W"], params["bilinear_b"])

    def pair_loss(self, logits: Tensor, gold: np.ndarray) -> Tensor:
        if self.config.loss == "at":
            return at_loss(logits, gold).mean()
        return mat_loss(logits, gold, self.config.alpha)

    def document_loss(
        self,
        doc: Document,
        params: dict[str, Tensor],
        relmat: Tensor | None = None,
        pairs: list[tuple[int, int]] | None = None,
        prepared: PreparedDocument | None = None,
    ) -> Tensor:
        relmat = self.relation_matrix(params) if relmat is None else relmat
        pairs = all_pairs(len(doc.entities)) if pairs is None else pairs
        prepared = self.prepare(doc) if prepared is None else prepared
        logits = self.pair_logits(prepared, pairs, params, relmat)
        gold = gold_matrix(pairs, entity_pair_labels(doc, self.relations), self.r)
        return self.pair_loss(logits, gold)

    def corpus_loss(self, docs: list[Document], params: dict[str, Tensor]) -> Tensor:
        """Mean document loss with one shared relation propagation."""
        relmat = self.relation_matrix(params)
        total = None
        for doc in docs:
            loss = self.document_loss(doc, params, relmat)
            total = loss if total is None else total + loss
        return total * (1.0 / len(docs))

    def score_document(
        self, doc: Document, params: dict[str, Tensor], relmat: Tensor | None = None
    ) -> tuple[list[tuple[int, int]], np.ndarray]:
        """Pairs and their (pairs, r + 1) sigmoid probabilities, TH last."""
        pairs = all_pairs(len(doc.entities))
        if not pairs:
            return pairs, np.zeros((0, self.r + 1))
        relmat = self.relation_matrix(params) if relmat is None else relmat
        logits = self.pair_logits(self.prepare(doc), pairs, params, relmat)
        return pairs, ad.sigmoid(logits).data
