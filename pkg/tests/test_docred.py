import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lace.docred import (
    CorpusError,
    CorpusParseError,
    RelationVocab,
    VocabError,
    build_label_vocab,
    corpus_to_json,
    dump_corpus,
    entity_pair_labels,
    multi_label_stats,
    parse_corpus,
    parse_corpus_text,
)
from lace.synthetic import make_corpus, make_world

from .conftest import corpus_from_sets, make_doc


def test_empty_array():
    corpus = parse_corpus_text("[]")
    assert corpus.counts == (0, 0, 0)


def test_minimal_counts(minimal_corpus):
    assert minimal_corpus.counts == (1, 2, 1)
    doc = minimal_corpus.documents[0]
    assert doc.entities[1].mentions[0].name == "U.S."
    assert doc.mention_span(doc.entities[1].mentions[0]) == (6, 7)


@pytest.mark.parametrize("pos", [[3, 3], [4, 2]])
def test_degenerate_span_rejected(minimal_json, pos):
    minimal_json[0]["vertexSet"][0][0]["pos"] = pos
    with pytest.raises(CorpusError, match="Wisconsin"):
        parse_corpus_text(json.dumps(minimal_json))


def test_span_past_sentence_end_rejected(minimal_json):
    minimal_json[0]["vertexSet"][1][0]["pos"] = [7, 9]
    with pytest.raises(CorpusError, match="Wisconsin"):
        parse_corpus_text(json.dumps(minimal_json))


def test_bad_fact_rejected(minimal_json):
    minimal_json[0]["labels"][0]["t"] = 0
    with pytest.raises(CorpusError):
        parse_corpus_text(json.dumps(minimal_json))
    minimal_json[0]["labels"][0]["t"] = 5
    with pytest.raises(CorpusError):
        parse_corpus_text(json.dumps(minimal_json))


def test_malformed_json_reports_position():
    with pytest.raises(CorpusParseError, match="line 2 column"):
        parse_corpus_text('[\n {"title": ]')


def test_unlabeled_documents_parse_fact_free(minimal_json):
    del minimal_json[0]["labels"]
    corpus = parse_corpus_text(json.dumps(minimal_json))
    assert corpus.counts == (1, 2, 0)
    assert not corpus.documents[0].labeled
    assert "labels" not in corpus_to_json(corpus)[0]


def test_mixed_types_are_flagged(minimal_json):
    minimal_json[0]["vertexSet"][0].append({"name": "WI", "sent_id": 0, "pos": [3, 4], "type": "ORG"})
    doc = parse_corpus_text(json.dumps(minimal_json)).documents[0]
    assert doc.entities[0].mixed_types
    assert [m.type for m in doc.entities[0].mentions] == ["LOC", "ORG"]


def test_round_trip_through_file(tmp_path):
    corpus = make_corpus(make_world(seed=3), n_docs=5, seed=4)
    path = tmp_path / "c.json"
    dump_corpus(corpus, path)
    again = parse_corpus(path)
    assert again == corpus
    dump_corpus(again, tmp_path / "d.json")
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_round_trip_property(world_seed, doc_seed):
    corpus = make_corpus(make_world(seed=world_seed), n_docs=3, seed=doc_seed)
    assert parse_corpus_text(json.dumps(corpus_to_json(corpus))) == corpus


def test_vocab_sorted_codes():
    corpus = corpus_from_sets([{"P17"}, {"P131"}])
    vocab = build_label_vocab(corpus)
    assert len(vocab) == 2
    assert vocab.codes == ("P131", "P17")
    assert vocab.index("P131") == 0 and vocab.index("P17") == 1
    assert vocab.na_index == 2


def test_vocab_empty_corpus():
    vocab = build_label_vocab(parse_corpus_text("[]"))
    assert len(vocab) == 0 and vocab.na_index == 0


def test_vocab_stable_under_shuffle():
    sets = [{"P3"}, {"P1", "P2"}, {"P9"}]
    assert build_label_vocab(corpus_from_sets(sets)) == build_label_vocab(corpus_from_sets(sets[::-1]))


def test_entity_pair_labels_grouping():
    doc = make_doc("d", [{"P17", "P131"}])
    vocab = RelationVocab(["P17", "P131"])
    assert entity_pair_labels(doc, vocab) == {(0, 1): frozenset({vocab.index("P17"), vocab.index("P131")})}


def test_entity_pair_labels_dedup_and_empty():
    doc = make_doc("d", [{"P17"}])
    dup = doc.__class__(doc.title, doc.sents, doc.entities, doc.facts * 2)
    vocab = RelationVocab(["P17"])
    assert entity_pair_labels(dup, vocab) == {(0, 1): frozenset({0})}
    assert entity_pair_labels(make_doc("e", [], n_entities=2), vocab) == {}


def test_entity_pair_labels_unknown_code():
    with pytest.raises(VocabError):
        entity_pair_labels(make_doc("d", [{"P99"}]), RelationVocab(["P17"]))


def test_multi_label_stats_hand_count():
    stats = multi_label_stats(corpus_from_sets([{"a"}, {"a", "b"}]))
    assert stats.histogram == {1: 1, 2: 1}
    assert stats.multi_label_fraction == 0.5
    assert stats.max_size == 2
    assert not stats.no_pairs


def test_multi_label_stats_empty():
    stats = multi_label_stats(parse_corpus_text("[]"))
    assert stats.histogram == {}
    assert stats.multi_label_fraction == 0.0
    assert stats.no_pairs


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sets(st.sampled_from("abcdef"), min_size=0, max_size=4), max_size=20))
def test_histogram_accounts_for_every_assignment(label_sets):
    corpus = corpus_from_sets(label_sets)
    stats = multi_label_stats(corpus)
    assert sum(k * c for k, c in stats.histogram.items()) == corpus.counts[2]
    vocab = build_label_vocab(corpus)
    for doc in corpus:
        assert all(entity_pair_labels(doc, vocab).values())
