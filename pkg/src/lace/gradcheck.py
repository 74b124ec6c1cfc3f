"""Seeded finite-difference checks of every differentiable component.

Each check builds a small fixture, contracts the component's output with a
fixed random probe to get a scalar, and compares tape gradients against
central differences. The fixtures are small enough that all four checks run
in a few seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .docred import build_label_vocab
from .encoder import EncoderConfig, TokenVocab, bilstm_encode, init_encoder_params
from .graph import CorrelationGraph, reweight
from .model import LaceModel, ModelConfig
from .propagation import GatConfig, gat_layer
from .synthetic import make_corpus, make_world

TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    component: str
    max_error: float
    worst_param: str
    seconds: float

    @property
    def ok(self) -> bool:
        return self.max_error < TOLERANCE


def _summarize(component: str, errors: dict[str, float], start: float) -> CheckResult:
    worst = max(errors, key=errors.get)
    return CheckResult(component, errors[worst], worst, time.perf_counter() - start)


def check_lstm_cell(seed: int = 0, eps: float = 1e-5) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    d_in, d_h = 5, 4
    params = {
        "x": Tensor(rng.uniform(-2, 2, (2, d_in))),
        "h": Tensor(rng.uniform(-2, 2, (2, d_h))),
        "c": Tensor(rng.uniform(-2, 2, (2, d_h))),
        "W": Tensor(rng.uniform(-2, 2, (d_in + d_h, 4 * d_h))),
        "b": Tensor(rng.uniform(-2, 2, 4 * d_h)),
    }
    ph, pc = rng.normal(size=(2, d_h)), rng.normal(size=(2, d_h))

    def f(p):
        h, c = ad.lstm_cell(p["x"], p["h"], p["c"], p["W"], p["b"])
        return (h * ph).sum() + (c * pc).sum()

    return _summarize("lstm_cell", grad_check(f, params, eps), start)


def check_bilstm(seed: int = 0, eps: float = 1e-5) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    cfg = EncoderConfig(d_word=4, d_type=2, d_hidden=3, layers=2)
    params = {k: v for k, v in init_encoder_params(rng, 2, 2, cfg).items() if k.startswith("lstm")}
    params = {k: Tensor(v.data + rng.uniform(-0.1, 0.1, v.shape)) for k, v in params.items()}
    params["x"] = Tensor(rng.uniform(-2, 2, (5, 6)))
    probe = rng.normal(size=(5, 6))

    def f(p):
        return (bilstm_encode(p["x"], p, layers=2) * probe).sum()

    return _summarize("bilstm_stack", grad_check(f, params, eps), start)


def check_gat_layer(seed: int = 0, eps: float = 1e-5) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    B = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 0], [0, 0, 1, 1]])
    R = reweight(B, 0.3)
    params = {"H": Tensor(rng.uniform(-2, 2, (4, 5)))}
    for k in range(2):
        params[f"W{k}"] = Tensor(rng.uniform(-1, 1, (5, 3)))
        params[f"a{k}"] = Tensor(rng.uniform(-1, 1, 6))
    probe = rng.normal(size=(4, 6))

    def f(p):
        out = gat_layer(p["H"], R, [p["W0"], p["W1"]], [p["a0"], p["a1"]], activation=ad.elu)
        return (out * probe).sum()

    return _summarize("gat_layer", grad_check(f, params, eps), start)


def tiny_model(seed: int = 0, n_docs: int = 2) -> tuple[LaceModel, list, dict[str, Tensor]]:
    """A two-document planted corpus with a small full-depth model."""
    corpus = make_corpus(make_world(n_relations=4, vocab_size=30, n_cues=6, seed=seed), n_docs, seed=seed, n_entities=3)
    relations = build_label_vocab(corpus)
    graph = CorrelationGraph.build(corpus, relations, tau=0, delta=0.05, p=0.3)
    config = ModelConfig(
        encoder=EncoderConfig(d_word=4, d_type=2, d_hidden=3),
        gat=GatConfig(d_rel=4, d_head=3, heads=2, layers=2),
    )
    model = LaceModel(config, TokenVocab.words(corpus), TokenVocab.types(corpus), relations, graph)
    params = model.init_params(seed)
    # move biases and gains off their initial constants so every path is exercised
    rng = np.random.default_rng(seed + 1)
    params = {k: Tensor(v.data + rng.uniform(-0.1, 0.1, v.shape), k) for k, v in params.items()}
    return model, list(corpus), params


def check_full_model(seed: int = 0, eps: float = 1e-5, max_coords: int | None = None) -> CheckResult:
    start = time.perf_counter()
    model, docs, params = tiny_model(seed)
    errors = grad_check(lambda p: model.corpus_loss(docs, p), params, eps, max_coords=max_coords, seed=seed)
    return _summarize("full_model_loss", errors, start)


CHECKS = {
    "lstm_cell": check_lstm_cell,
    "bilstm_stack": check_bilstm,
    "gat_layer": check_gat_layer,
    "full_model_loss": check_full_model,
}


def run_all(seed: int = 0) -> list[CheckResult]:
    return [check(seed=seed) for check in CHECKS.values()]
