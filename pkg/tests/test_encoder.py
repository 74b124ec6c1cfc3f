import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lace import autodiff as ad
from lace.autodiff import DomainError, Tensor, grad_check
from lace.docred import Corpus, parse_corpus_text
from lace.encoder import (
    EncoderConfig,
    TokenVocab,
    bilstm_encode,
    embed_tokens,
    encode_entities,
    entity_pool,
    init_encoder_params,
    load_embeddings,
    mention_pool,
    prepare_document,
)

FIXTURE_CFG = EncoderConfig(d_word=8, d_type=4, d_hidden=8)


def setup(minimal_corpus, cfg=FIXTURE_CFG, seed=0):
    words = TokenVocab.words(minimal_corpus)
    types = TokenVocab.types(minimal_corpus)
    params = init_encoder_params(np.random.default_rng(seed), len(words), len(types), cfg)
    prepared = prepare_document(minimal_corpus.documents[0], words, types)
    return words, types, params, prepared


def test_embed_width(minimal_corpus):
    cfg = EncoderConfig(d_word=4, d_type=2, d_hidden=3)
    _, _, params, prepared = setup(minimal_corpus, cfg)
    assert embed_tokens(prepared, params).shape == (8, 6)


def test_all_unk_document(minimal_corpus):
    words = TokenVocab([])
    types = TokenVocab([])
    params = init_encoder_params(np.random.default_rng(0), len(words), len(types), FIXTURE_CFG)
    prepared = prepare_document(minimal_corpus.documents[0], words, types)
    out = embed_tokens(prepared, params).data
    expected = np.concatenate([params["word_emb"].data[0], params["type_emb"].data[0]])
    np.testing.assert_array_equal(out, np.tile(expected, (8, 1)))


def test_mention_tokens_get_their_type_row(minimal_json):
    minimal_json[0]["vertexSet"][0][0]["type"] = "PER"
    corpus = parse_corpus_text(json.dumps(minimal_json))
    words, types = TokenVocab.words(corpus), TokenVocab.types(corpus)
    prepared = prepare_document(corpus.documents[0], words, types)
    assert prepared.type_ids[0] == types["PER"]
    assert prepared.type_ids[6] == types["LOC"]
    assert prepared.type_ids[1] == 0  # "is" carries the none type
    params = init_encoder_params(np.random.default_rng(0), len(words), len(types), FIXTURE_CFG)
    row = embed_tokens(prepared, params).data[0]
    np.testing.assert_array_equal(row[8:], params["type_emb"].data[types["PER"]])


def test_bilstm_single_token_shape(minimal_corpus):
    _, _, params, _ = setup(minimal_corpus)
    out = bilstm_encode(Tensor(np.ones((1, 12))), params)
    assert out.shape == (1, 16)


def test_bilstm_zero_weights(minimal_corpus):
    _, _, params, prepared = setup(minimal_corpus)
    zeros = {k: Tensor(np.zeros(v.shape)) if k.startswith("lstm") else v for k, v in params.items()}
    out = bilstm_encode(embed_tokens(prepared, zeros), zeros)
    np.testing.assert_array_equal(out.data, 0.0)


def test_bilstm_empty_sequence(minimal_corpus):
    _, _, params, _ = setup(minimal_corpus)
    with pytest.raises(DomainError):
        bilstm_encode(Tensor(np.zeros((0, 12))), params)


def test_bilstm_directions():
    """Forward half at t sees x[:t+1]; backward half sees x[t:]."""
    rng = np.random.default_rng(2)
    params = init_encoder_params(rng, 2, 2, FIXTURE_CFG)
    x = rng.uniform(-1, 1, (5, 12))
    out = bilstm_encode(Tensor(x), params).data
    y = x.copy()
    y[4] += 1.0
    out2 = bilstm_encode(Tensor(y), params).data
    np.testing.assert_array_equal(out[:4, :8], out2[:4, :8])
    assert not np.allclose(out[:4, 8:], out2[:4, 8:])


def test_bilstm_gradient_three_tokens():
    rng = np.random.default_rng(5)
    params = init_encoder_params(rng, 2, 2, FIXTURE_CFG)
    lstm = {k: v for k, v in params.items() if k.startswith("lstm")}
    lstm["x"] = Tensor(rng.uniform(-2, 2, (3, 12)))
    probe = rng.normal(size=(3, 16))
    err = grad_check(lambda p: (bilstm_encode(p["x"], p) * probe).sum(), lstm)
    assert max(err.values()) < 1e-4, err


def test_two_layer_bilstm_gradient():
    rng = np.random.default_rng(6)
    cfg = EncoderConfig(d_word=8, d_type=4, d_hidden=4, layers=2)
    params = init_encoder_params(rng, 2, 2, cfg)
    lstm = {k: v for k, v in params.items() if k.startswith("lstm")}
    lstm["x"] = Tensor(rng.uniform(-2, 2, (4, 12)))
    probe = rng.normal(size=(4, 8))
    err = grad_check(lambda p: (bilstm_encode(p["x"], p, layers=2) * probe).sum(), lstm)
    assert max(err.values()) < 1e-4, err


def test_mention_pool_examples():
    states = Tensor([[1.0, -2.0], [0.0, 5.0], [7.0, 7.0]])
    np.testing.assert_array_equal(mention_pool(states, 2, 3).data, [7.0, 7.0])
    np.testing.assert_array_equal(mention_pool(states, 0, 2).data, [1.0, 5.0])
    flipped = Tensor(states.data[[1, 0, 2]])
    np.testing.assert_array_equal(mention_pool(flipped, 0, 2).data, [1.0, 5.0])
    with pytest.raises(DomainError):
        mention_pool(states, 1, 1)


def test_entity_pool_examples():
    m = Tensor([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(entity_pool([m]).data, m.data)
    np.testing.assert_allclose(entity_pool([m, Tensor(m.data)]).data, m.data + math.log(2), atol=1e-15)
    with pytest.raises(DomainError):
        entity_pool([])


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 4)), elements=st.floats(-30, 30)))
def test_entity_pool_bounds(ms):
    out = entity_pool([Tensor(row) for row in ms]).data
    assert (out >= ms.max(axis=0) - 1e-12).all()
    assert (out <= ms.max(axis=0) + math.log(len(ms)) + 1e-12).all()


def test_encoder_deterministic(minimal_corpus):
    _, _, p1, prepared = setup(minimal_corpus, seed=9)
    _, _, p2, _ = setup(minimal_corpus, seed=9)
    e1 = encode_entities(prepared, p1).data
    e2 = encode_entities(prepared, p2).data
    assert e1.shape == (2, 16)
    assert e1.tobytes() == e2.tobytes()


def test_gradient_through_full_encoder(minimal_corpus):
    _, _, params, prepared = setup(minimal_corpus, seed=4)
    probe = np.random.default_rng(0).normal(size=16)

    def f(p):
        E = encode_entities(prepared, p)
        return ad.tanh(ad.matmul(E[0], probe)) + (E[1] * E[1]).sum()

    err = grad_check(f, params)
    assert max(err.values()) < 1e-4, err


def test_load_embeddings(tmp_path, minimal_corpus):
    words = TokenVocab.words(minimal_corpus)
    table = np.zeros((len(words), 3))
    path = tmp_path / "vec.txt"
    path.write_text("wisconsin 1 2 3\nunknownword 4 5 6\nis 0.5 0.5\nstate -1 0 1\n")
    assert load_embeddings(path, words, table) == 2
    np.testing.assert_array_equal(table[words["wisconsin"]], [1, 2, 3])
    np.testing.assert_array_equal(table[words["state"]], [-1, 0, 1])
    assert not table[words["is"]].any()


def test_token_vocab_reserved_row():
    vocab = TokenVocab.words(Corpus([]))
    assert len(vocab) == 1 and vocab["anything"] == 0
