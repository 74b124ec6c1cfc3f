import json
import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lace.autodiff import Tensor
from lace.docred import Corpus, CorpusError, RelationVocab, build_label_vocab, entity_pair_codes
from lace.graph import CorrelationGraph
from lace.pipeline import (
    Adam,
    ConfigError,
    TrainConfig,
    build_model,
    clip_by_global_norm,
    evaluate,
    load_checkpoint,
    load_predictions,
    multi_label_f1,
    predict_corpus,
    run_ablation,
    save_checkpoint,
    save_predictions,
    train,
    variant_config,
    write_trace,
)
from lace.synthetic import make_corpus, make_world

from .conftest import corpus_from_sets, make_doc

SMALL = TrainConfig(
    epochs=2, batch_size=2, lr=0.01, d_word=6, d_type=2, d_hidden=4, d_rel=5, d_head=3, tau=0, na_keep=1.0
)


@pytest.fixture(scope="module")
def planted():
    world = make_world(n_relations=4, vocab_size=40, n_cues=6, seed=1)
    return make_corpus(world, 6, seed=2, n_entities=3)


def graph_for(corpus, cfg=SMALL):
    return CorrelationGraph.build(corpus, build_label_vocab(corpus), cfg.tau, cfg.delta, cfg.p)


def gold_predictions(corpus):
    return [
        {"title": d.title, "h_idx": f.head, "t_idx": f.tail, "r": f.relation} for d in corpus for f in d.facts
    ]


# -- evaluation --------------------------------------------------------------


def test_perfect_predictions(planted):
    scores = evaluate(gold_predictions(planted), planted)
    assert scores["f1"] == 1.0 and scores["precision"] == 1.0 and scores["recall"] == 1.0


def test_empty_predictions():
    scores = evaluate([], corpus_from_sets([{"a"}]))
    assert (scores["precision"], scores["recall"], scores["f1"]) == (0.0, 0.0, 0.0)


def test_half_right():
    corpus = corpus_from_sets([{"a"}, {"b"}], per_doc=2)
    preds = [
        {"title": "d0", "h_idx": 0, "t_idx": 1, "r": "a"},
        {"title": "d0", "h_idx": 0, "t_idx": 1, "r": "b"},
    ]
    scores = evaluate(preds, corpus)
    assert (scores["precision"], scores["recall"], scores["f1"]) == (0.5, 0.5, 0.5)


def test_unknown_title_rejected():
    with pytest.raises(CorpusError):
        evaluate([{"title": "nope", "h_idx": 0, "t_idx": 1, "r": "a"}], corpus_from_sets([{"a"}]))


def naive_scores(preds, corpus):
    gold = {(d.title, f.head, f.tail, f.relation) for d in corpus for f in d.facts}
    pred = {(p["title"], p["h_idx"], p["t_idx"], p["r"]) for p in preds}
    tp = len(gold & pred)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(gold) if gold else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.integers(0, 15))
def test_matches_naive_recomputation(seed, keep, extra):
    corpus = make_corpus(make_world(n_relations=4, vocab_size=30, n_cues=6, seed=seed % 7), 3, seed=seed, n_entities=3)
    rng = random.Random(seed)
    preds = [p for p in gold_predictions(corpus) if rng.random() < keep]
    for _ in range(extra):
        d = rng.choice(corpus.documents)
        preds.append({"title": d.title, "h_idx": rng.randrange(3), "t_idx": rng.randrange(3), "r": f"R{rng.randrange(4)}"})
    assert len(preds) <= 100
    s = evaluate(preds, corpus)
    assert (s["precision"], s["recall"], s["f1"]) == naive_scores(preds, corpus)


def test_ign_f1_drops_facts_seen_in_training():
    dev = corpus_from_sets([{"a"}, {"b"}], per_doc=2)
    # a training document whose entities carry the names of dev entities 0 and 1
    train_doc = replace(make_doc("t", [{"a"}]), entities=dev.documents[0].entities[:2])
    preds = gold_predictions(dev)
    scores = evaluate(preds, dev, Corpus([train_doc]))
    assert scores["correct_in_train"] == 1
    assert scores["f1"] == 1.0
    assert scores["ign_precision"] == 1.0  # one remaining correct of one remaining prediction
    assert scores["recall"] == 1.0 and scores["ign_f1"] == 1.0
    wrong = preds + [{"title": "d0", "h_idx": 1, "t_idx": 2, "r": "a"}]
    scores = evaluate(wrong, dev, Corpus([train_doc]))
    assert scores["ign_precision"] == pytest.approx(0.5)


def test_multi_label_absent_and_perfect():
    corpus = corpus_from_sets([{"a"}, {"a", "b"}, {"c", "d"}, {"a", "b", "c"}])
    assert multi_label_f1([], corpus, k=4) is None
    assert multi_label_f1(gold_predictions(corpus), corpus, k=2).f1 == 1.0
    assert multi_label_f1(gold_predictions(corpus), corpus, min_size=2).pairs == 3
    with pytest.raises(ValueError):
        multi_label_f1([], corpus, k=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sets(st.sampled_from("abcde"), min_size=1, max_size=4), min_size=1, max_size=12), st.integers(0, 99))
def test_partition_by_label_set_size(sets, seed):
    corpus = corpus_from_sets(sets)
    rng = random.Random(seed)
    preds = [p for p in gold_predictions(corpus) if rng.random() < 0.6]
    for d in corpus:
        preds.append({"title": d.title, "h_idx": 0, "t_idx": 1, "r": rng.choice("abcde")})
    labeled = {(d.title, h, t) for d in corpus for (h, t) in entity_pair_codes(d)}
    whole = evaluate([p for p in preds if (p["title"], p["h_idx"], p["t_idx"]) in labeled], corpus)
    parts = [multi_label_f1(preds, corpus, k=k) for k in range(1, 6)]
    assert sum(p.n_gold for p in parts if p) == whole["n_gold"]
    assert sum(p.n_pred for p in parts if p) == whole["n_pred"]
    assert sum(p.tp for p in parts if p) == whole["tp"]


def test_prediction_file_round_trip(tmp_path, planted):
    preds = gold_predictions(planted)
    save_predictions(preds, tmp_path / "p.json")
    assert load_predictions(tmp_path / "p.json") == preds


# -- configuration -----------------------------------------------------------


@pytest.mark.parametrize(
    "bad", [{"lr": 0.0}, {"lr_encoder": -1.0}, {"na_keep": 0.0}, {"na_keep": 1.5}, {"alpha": 2.0}, {"theta": -1}]
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 0.1})
    assert TrainConfig.from_dict({"epochs": 3}).epochs == 3


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.tau, cfg.delta, cfg.p, cfg.theta, cfg.alpha) == (10, 0.05, 0.3, 0.85, 0.4)
    assert (cfg.gat_layers, cfg.gat_heads, cfg.d_head, cfg.lr) == (2, 2, 500, 1e-3)


def test_unknown_ablation_switch():
    with pytest.raises(ConfigError):
        variant_config(SMALL, "no-encoder")
    assert variant_config(SMALL, "mask-only-gat").gat_mode == "mask"


def test_vocab_mismatch(planted):
    elsewhere = corpus_from_sets([{"X1", "X2"}])
    other = CorrelationGraph.build(elsewhere, RelationVocab(["X1", "X2"]), 0, 0.05, 0.3)
    with pytest.raises(ConfigError):
        build_model(planted, other, SMALL)


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_by_global_norm(grads, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(grads["a"], [0.6])
    np.testing.assert_allclose(grads["b"], [0.8])


def test_adam_first_step_moves_by_lr():
    params = {"w": Tensor([1.0, -1.0]), "word_emb": Tensor([0.0])}
    opt = Adam(TrainConfig(lr=0.1, lr_encoder=0.01))
    out = opt.step(params, {"w": np.array([2.0, -3.0]), "word_emb": np.array([5.0])})
    np.testing.assert_allclose(out["w"].data, [0.9, -0.9], atol=1e-6)
    np.testing.assert_allclose(out["word_emb"].data, [-0.01], atol=1e-6)


# -- training ----------------------------------------------------------------


def test_zero_epochs_returns_initialization(planted):
    cfg = replace(SMALL, epochs=0)
    ckpt, trace = train(planted, graph_for(planted), cfg)
    init = build_model(planted, graph_for(planted), cfg).init_params(cfg.seed)
    assert trace == []
    for name, p in init.items():
        assert p.data.tobytes() == ckpt.params[name].data.tobytes()


def test_training_is_deterministic(planted, tmp_path):
    g = graph_for(planted)
    a, trace_a = train(planted, g, SMALL)
    b, trace_b = train(planted, g, SMALL)
    assert [s.mean_loss for s in trace_a] == [s.mean_loss for s in trace_b]
    save_predictions(predict_corpus(a, planted, theta=0.0), tmp_path / "a.json")
    save_predictions(predict_corpus(b, planted, theta=0.0), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_loss_decreases(planted):
    cfg = replace(SMALL, epochs=8)
    _, trace = train(planted, graph_for(planted), cfg)
    assert trace[-1].mean_loss < trace[0].mean_loss


def test_trace_csv(planted, tmp_path):
    _, trace = train(planted, graph_for(planted), SMALL, dev=planted)
    write_trace(trace, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,dev_F1"
    assert len(lines) == 1 + SMALL.epochs
    assert all(trace_row.dev_f1 is not None for trace_row in trace)


def test_checkpoint_round_trip_is_byte_exact(planted, tmp_path):
    ckpt, _ = train(planted, graph_for(planted), SMALL)
    save_checkpoint(ckpt, tmp_path / "a")
    again = load_checkpoint(tmp_path / "a")
    save_checkpoint(again, tmp_path / "b")
    for name in ("manifest.json", "params.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for name, p in ckpt.params.items():
        assert p.data.tobytes() == again.params[name].data.tobytes()
    assert again.config == ckpt.config
    assert predict_corpus(again, planted, 0.0) == predict_corpus(ckpt, planted, 0.0)


def test_checkpoint_without_graph(planted, tmp_path):
    cfg = replace(SMALL, use_graph=False, epochs=1)
    ckpt, _ = train(planted, None, cfg)
    save_checkpoint(ckpt, tmp_path / "c")
    assert load_checkpoint(tmp_path / "c").model.graph is None


def test_checkpoint_graph_hash_verified(planted, tmp_path):
    ckpt, _ = train(planted, graph_for(planted), replace(SMALL, epochs=0))
    save_checkpoint(ckpt, tmp_path / "c")
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    manifest["graph_hash"] = "0" * 64
    (tmp_path / "c" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "c")


def test_ablation_rows(planted):
    cfg = replace(SMALL, epochs=1)
    assert [r["variant"] for r in run_ablation(planted, cfg)] == ["baseline"]
    rows = run_ablation(planted, cfg, ["no-correlation-module", "at-loss-instead-of-mat"])
    assert [r["variant"] for r in rows] == ["baseline", "no-correlation-module", "at-loss-instead-of-mat"]
    assert rows[0]["delta_f1"] == 0.0
    with pytest.raises(ConfigError):
        run_ablation(planted, cfg, ["bogus"])


def test_predictions_use_theta(planted):
    ckpt, _ = train(planted, graph_for(planted), SMALL)
    loose = predict_corpus(ckpt, planted, theta=0.0)
    strict = predict_corpus(ckpt, planted, theta=5.0)
    key = lambda p: (p["title"], p["h_idx"], p["t_idx"], p["r"])  # noqa: E731
    assert {key(p) for p in strict} <= {key(p) for p in loose}
