"""Training, prediction, DocRED-protocol evaluation, checkpoints and ablations."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff import Tape, Tensor
from .classifier import ClassifierConfig, predict
from .docred import Corpus, CorpusError, Document, build_label_vocab, entity_pair_codes, entity_pair_labels
from .encoder import EncoderConfig, TokenVocab
from .graph import CorrelationGraph
from .model import LaceModel, ModelConfig, all_pairs
from .propagation import GatConfig

log = logging.getLogger(__name__)

ENCODER_PARAMS = ("word_emb", "type_emb", "lstm")
CHECKPOINT_FORMAT = "lace-checkpoint/1"
ABLATIONS = ("no-correlation-module", "at-loss-instead-of-mat", "mask-only-gat")


class ConfigError(ValueError):
    """Inconsistent configuration or inputs."""


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 30
    batch_size: int = 4
    lr: float = 1e-3
    lr_encoder: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = 1.0
    na_keep: float = 0.25
    # correlation graph
    tau: float = 10
    delta: float = 0.05
    p: float = 0.3
    # classifier
    theta: float = 0.85
    alpha: float = 0.4
    loss: str = "mat"
    groups: int = 1
    # encoder
    d_word: int = 100
    d_type: int = 20
    d_hidden: int = 128
    lstm_layers: int = 1
    lowercase: bool = True
    # relation propagation
    use_graph: bool = True
    gat_layers: int = 2
    gat_heads: int = 2
    d_rel: int = 500
    d_head: int = 500
    gat_mode: str = "reweight"

    def __post_init__(self):
        rates = [self.lr] + ([self.lr_encoder] if self.lr_encoder is not None else [])
        if any(r <= 0 for r in rates):
            raise ConfigError("learning rates must be positive")
        if not 0 < self.na_keep <= 1:
            raise ConfigError(f"na_keep must lie in (0, 1], got {self.na_keep}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.theta < 0:
            raise ConfigError(f"theta must be >= 0, got {self.theta}")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(
                encoder=EncoderConfig(
                    self.d_word, self.d_type, self.d_hidden, self.lstm_layers, self.lowercase
                ),
                gat=GatConfig(self.d_rel, self.d_head, self.gat_heads, self.gat_layers, 0.2, self.gat_mode),
                classifier=ClassifierConfig(self.groups),
                use_graph=self.use_graph,
                loss=self.loss,
                alpha=self.alpha,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class Checkpoint:
    config: TrainConfig
    model: LaceModel
    params: dict[str, Tensor]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    dev_f1: float | None = None


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def lr_for(self, name: str) -> float:
        if self.cfg.lr_encoder is not None and name.startswith(ENCODER_PARAMS):
            return self.cfg.lr_encoder
        return self.cfg.lr

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        updated = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, 0.0) * cfg.beta1 + (1 - cfg.beta1) * g
            v = self.v.get(name, 0.0) * cfg.beta2 + (1 - cfg.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - cfg.beta1**t)
            v_hat = v / (1 - cfg.beta2**t)
            step = self.lr_for(name) * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            updated[name] = Tensor(p.data - step, name)
        return updated


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def build_model(train_corpus: Corpus, graph: CorrelationGraph | None, cfg: TrainConfig) -> LaceModel:
    relations = build_label_vocab(train_corpus)
    if graph is not None and tuple(graph.relations) != relations.codes:
        raise ConfigError(
            f"graph relations ({graph.r}) differ from the corpus relation vocabulary ({len(relations)})"
        )
    mcfg = cfg.model_config()
    if mcfg.use_graph and graph is None:
        raise ConfigError("a correlation graph is required unless use_graph is off")
    return LaceModel(
        mcfg,
        TokenVocab.words(train_corpus, cfg.lowercase),
        TokenVocab.types(train_corpus),
        relations,
        graph if mcfg.use_graph else None,
    )


def _training_pairs(doc: Document, labels, rng: np.random.Generator, keep: float):
    pairs = []
    for pair in all_pairs(len(doc.entities)):
        if pair in labels or keep >= 1.0 or rng.random() < keep:
            pairs.append(pair)
    return pairs


def train(
    corpus: Corpus,
    graph: CorrelationGraph | None,
    cfg: TrainConfig,
    dev: Corpus | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Adam training on the MAT (or AT) objective; deterministic for a fixed seed."""
    model = build_model(corpus, graph, cfg)
    params = model.init_params(cfg.seed)
    opt = Adam(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    docs = [d for d in corpus.documents if len(d.entities) >= 2]
    prepared = {d.title: model.prepare(d) for d in docs}
    labels = {d.title: entity_pair_labels(d, model.relations) for d in docs}
    trace: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(docs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [docs[i] for i in order[start : start + cfg.batch_size]]
            with Tape() as tape:
                relmat = model.relation_matrix(params)
                total = None
                for doc in batch:
                    pairs = _training_pairs(doc, labels[doc.title], rng, cfg.na_keep)
                    loss = model.document_loss(doc, params, relmat, pairs, prepared[doc.title])
                    total = loss if total is None else total + loss
                batch_loss = total * (1.0 / len(batch))
            grads_map = tape.backward(batch_loss)
            grads = {name: grads_map[p] for name, p in params.items()}
            clip_by_global_norm(grads, cfg.clip_norm)
            params = opt.step(params, grads)
            losses.append((batch_loss.item(), len(batch)))
        mean_loss = sum(l * n for l, n in losses) / max(1, sum(n for _, n in losses))
        dev_f1 = None
        if dev is not None:
            ckpt = Checkpoint(cfg, model, params)
            dev_f1 = evaluate(predict_corpus(ckpt, dev), dev)["f1"]
        stats = EpochStats(epoch, mean_loss, dev_f1)
        trace.append(stats)
        log.info("epoch %d loss %.6f%s", epoch, mean_loss, "" if dev_f1 is None else f" dev F1 {dev_f1:.4f}")
        if on_epoch is not None:
            on_epoch(stats)
    return Checkpoint(cfg, model, params), trace


def write_trace(trace: Sequence[EpochStats], path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss", "dev_F1"])
        for s in trace:
            writer.writerow([s.epoch, repr(s.mean_loss), "" if s.dev_f1 is None else repr(s.dev_f1)])


# ---------------------------------------------------------------------------
# prediction and evaluation
# ---------------------------------------------------------------------------


def predict_corpus(ckpt: Checkpoint, corpus: Corpus, theta: float | None = None) -> list[dict]:
    """DocRED-style predictions {title, h_idx, t_idx, r, score}, in document/pair/relation order."""
    theta = ckpt.config.theta if theta is None else theta
    model, params = ckpt.model, ckpt.params
    relmat = model.relation_matrix(params)
    out = []
    for doc in corpus:
        pairs, probs = model.score_document(doc, params, relmat)
        for (h, t), row, labels in zip(pairs, probs, predict(probs, theta) if pairs else []):
            for c in sorted(labels):
                out.append(
                    {"title": doc.title, "h_idx": h, "t_idx": t, "r": model.relations.code(c), "score": float(row[c])}
                )
    return out


def save_predictions(preds: list[dict], path: str | os.PathLike, with_scores: bool = True) -> None:
    rows = preds if with_scores else [{k: v for k, v in p.items() if k != "score"} for p in preds]
    Path(path).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")


def load_predictions(path: str | os.PathLike) -> list[dict]:
    return json.loads(Path(path).read_text("utf-8"))


def _prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _prediction_tuples(predictions: Iterable[dict], gold: Corpus) -> set[tuple[str, int, int, str]]:
    titles = {d.title for d in gold}
    tuples = set()
    for p in predictions:
        if p["title"] not in titles:
            raise CorpusError(f"prediction for unknown document title {p['title']!r}")
        tuples.add((p["title"], int(p["h_idx"]), int(p["t_idx"]), str(p["r"])))
    return tuples


def _gold_tuples(gold: Corpus) -> set[tuple[str, int, int, str]]:
    return {(d.title, f.head, f.tail, f.relation) for d in gold for f in d.facts}


def train_fact_names(train: Corpus) -> set[tuple[str, str, str]]:
    facts = set()
    for doc in train:
        for f in doc.facts:
            for n1 in doc.entities[f.head].names:
                for n2 in doc.entities[f.tail].names:
                    facts.add((n1, n2, f.relation))
    return facts


def evaluate(predictions: Iterable[dict], gold: Corpus, train: Corpus | None = None) -> dict:
    """Micro P/R/F1 over (title, h, t, r) tuples, plus Ign F1 when ``train`` is given.

    Ign F1 follows the official DocRED scorer: correct predictions whose
    (head name, tail name, relation) also appears in the training facts are
    dropped from both the correct count and the prediction count; recall is
    left unchanged.
    """
    pred = _prediction_tuples(predictions, gold)
    gold_set = _gold_tuples(gold)
    correct = pred & gold_set
    precision, recall, f1 = _prf(len(correct), len(pred), len(gold_set))
    result = {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": len(correct),
        "n_pred": len(pred),
        "n_gold": len(gold_set),
    }
    if train is not None:
        seen = train_fact_names(train)
        docs = gold.by_title()
        in_train = 0
        for title, h, t, r in correct:
            doc = docs[title]
            if any(
                (n1, n2, r) in seen for n1 in doc.entities[h].names for n2 in doc.entities[t].names
            ):
                in_train += 1
        ign_p = (len(correct) - in_train) / (len(pred) - in_train) if len(pred) > in_train else 0.0
        result["ign_precision"] = ign_p
        result["ign_f1"] = 2 * ign_p * recall / (ign_p + recall) if ign_p + recall else 0.0
        result["correct_in_train"] = in_train
    return result


@dataclass(frozen=True)
class MultiLabelScore:
    label: str
    pairs: int
    tp: int
    n_pred: int
    n_gold: int
    precision: float
    recall: float
    f1: float


def multi_label_f1(
    predictions: Iterable[dict], gold: Corpus, k: int | None = None, min_size: int | None = None
) -> MultiLabelScore | None:
    """Micro F1 restricted to entity pairs whose gold label set has exactly ``k`` relations.

    With ``min_size`` instead, pairs with at least that many gold relations are
    used (``min_size=2`` is the "Overall" multi-relation column). Returns None
    when no pair qualifies.
    """
    if (k is None) == (min_size is None):
        raise ValueError("give exactly one of k or min_size")
    if k is not None and k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    keep = (lambda n: n == k) if k is not None else (lambda n: n >= min_size)
    selected = {
        (d.title, h, t)
        for d in gold
        for (h, t), codes in entity_pair_codes(d).items()
        if keep(len(codes))
    }
    if not selected:
        return None
    pred = {x for x in _prediction_tuples(predictions, gold) if x[:3] in selected}
    gold_set = {x for x in _gold_tuples(gold) if x[:3] in selected}
    tp = len(pred & gold_set)
    label = f"{k}-Rel" if k is not None else f">={min_size}-Rel"
    return MultiLabelScore(label, len(selected), tp, len(pred), len(gold_set), *_prf(tp, len(pred), len(gold_set)))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Write ``manifest.json`` and ``params.bin`` (little-endian float64) into a directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    model = ckpt.model
    entries, offset, blobs = [], 0, []
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name].data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    graph = model.graph
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(ckpt.config),
        "words": list(model.words.items),
        "types": list(model.types.items),
        "relations": list(model.relations.codes),
        "graph": graph.to_json() if graph is not None else None,
        "graph_hash": graph.digest() if graph is not None else None,
        "params": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", "utf-8")
    (root / "params.bin").write_bytes(b"".join(blobs))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    from .docred import RelationVocab

    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text("utf-8"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{root} is not a {CHECKPOINT_FORMAT} checkpoint")
    cfg = TrainConfig.from_dict(manifest["config"])
    graph = CorrelationGraph.from_json(manifest["graph"]) if manifest["graph"] is not None else None
    if graph is not None and graph.digest() != manifest["graph_hash"]:
        raise ConfigError("checkpoint graph does not match its recorded hash")
    words = TokenVocab(manifest["words"][1:], manifest["words"][0])
    types = TokenVocab(manifest["types"][1:], manifest["types"][0])
    model = LaceModel(cfg.model_config(), words, types, RelationVocab(manifest["relations"]), graph)
    payload = (root / "params.bin").read_bytes()
    params = {}
    for entry in manifest["params"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        params[entry["name"]] = Tensor(arr.reshape(entry["shape"]), entry["name"])
    return Checkpoint(cfg, model, params)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------


def variant_config(cfg: TrainConfig, switch: str) -> TrainConfig:
    if switch == "no-correlation-module":
        return replace(cfg, use_graph=False)
    if switch == "at-loss-instead-of-mat":
        return replace(cfg, loss="at")
    if switch == "mask-only-gat":
        return replace(cfg, gat_mode="mask")
    raise ConfigError(f"unknown ablation switch {switch!r} (choose from {', '.join(ABLATIONS)})")


def run_ablation(
    train_corpus: Corpus,
    cfg: TrainConfig,
    switches: Sequence[str] = (),
    eval_corpus: Corpus | None = None,
) -> list[dict]:
    """Train the baseline and one variant per switch under the same seed.

    Each row reports F1, Overall (>= 2 relations) multi-label F1 and the
    deltas against the baseline, measured on ``eval_corpus`` (default: the
    training corpus).
    """
    for s in switches:
        variant_config(cfg, s)
    eval_corpus = train_corpus if eval_corpus is None else eval_corpus
    graph = CorrelationGraph.build(train_corpus, build_label_vocab(train_corpus), cfg.tau, cfg.delta, cfg.p)
    rows = []
    for name in ("baseline", *switches):
        vcfg = cfg if name == "baseline" else variant_config(cfg, name)
        ckpt, trace = train(train_corpus, graph, vcfg)
        preds = predict_corpus(ckpt, eval_corpus)
        scores = evaluate(preds, eval_corpus)
        multi = multi_label_f1(preds, eval_corpus, min_size=2)
        rows.append(
            {
                "variant": name,
                "f1": scores["f1"],
                "multi_f1": None if multi is None else multi.f1,
                "multi_recall": None if multi is None else multi.recall,
                "final_loss": trace[-1].mean_loss if trace else None,
            }
        )
    base = rows[0]
    for row in rows:
        row["delta_f1"] = row["f1"] - base["f1"]
        row["delta_multi_f1"] = (
            None if row["multi_f1"] is None or base["multi_f1"] is None else row["multi_f1"] - base["multi_f1"]
        )
    return rows
