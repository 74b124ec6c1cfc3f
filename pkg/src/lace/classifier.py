"""Relation-aware bilinear classifier, MAT loss and threshold decoding.

Scores are batched: a document's candidate pairs form the rows of a
(pairs, r + 1) logit matrix whose last column is the threshold class TH.
Gold labels are a (pairs, r) 0/1 matrix; an all-zero row is an NA pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

DEFAULT_ALPHA = 0.4
DEFAULT_THETA = 0.85


@dataclass(frozen=True)
class ClassifierConfig:
    groups: int = 1
    ln_eps: float = 1e-5


def init_classifier_params(
    rng: np.random.Generator, r: int, d_b: int, cfg: ClassifierConfig
) -> dict[str, Tensor]:
    width = d_b + r
    if width % cfg.groups:
        raise ValueError(f"bilinear width {width} not divisible into {cfg.groups} groups")
    block = width // cfg.groups
    # fan sizes of the dense form keep the logit scale independent of grouping
    w = ad.glorot_uniform(rng, (r + 1, cfg.groups, block, block), fan_in=width, fan_out=width)
    return {
        "ln_s_gain": Tensor(np.ones(r), "ln_s_gain"),
        "ln_s_bias": Tensor(np.zeros(r), "ln_s_bias"),
        "ln_o_gain": Tensor(np.ones(r), "ln_o_gain"),
        "ln_o_bias": Tensor(np.zeros(r), "ln_o_bias"),
        "bilinear_W": Tensor(w, "bilinear_W"),
        "bilinear_b": Tensor(np.zeros(r + 1), "bilinear_b"),
    }


def project(E: Tensor, relfeat: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """LayerNorm(relfeat · E) for each row of ``E``; (n, d_B) -> (n, r)."""
    if E.shape[-1] != relfeat.shape[1]:
        raise ShapeError(f"entity width {E.shape} does not match relation features {relfeat.shape}")
    return ad.layer_norm(ad.matmul(E, relfeat.T), gain, bias, eps)


def bilinear_score(E_s: Tensor, I_s: Tensor, E_o: Tensor, I_o: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Logits (n, r + 1) of σ((E_s ⊕ I_s)ᵀ W_c (E_o ⊕ I_o) + b_c); TH is the last column."""
    xs = ad.concat([E_s, I_s], axis=-1)
    xo = ad.concat([E_o, I_o], axis=-1)
    return ad.bilinear(xs, weight, xo) + bias


@dataclass(frozen=True)
class PairScores:
    logits: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return ad.sigmoid(self.logits).data

    @property
    def threshold_probability(self):
        return self.probabilities[..., -1]


def _split(logits: Tensor, gold: np.ndarray) -> tuple[Tensor, Tensor, np.ndarray]:
    gold = np.asarray(gold, dtype=np.float64)
    if gold.shape != (logits.shape[0], logits.shape[1] - 1):
        raise ShapeError(f"gold {gold.shape} does not match logits {logits.shape}")
    return logits[:, :-1], logits[:, -1], gold


def mat_loss_positive(logits: Tensor, gold: np.ndarray) -> Tensor:
    """Per-pair −log(1 − P(TH)) − Σ_{c ∈ gold} log P(c), evaluated in log space."""
    rel, th, gold = _split(logits, gold)
    th_term = ad.softplus(th)  # −log σ(−x)
    pos_term = (ad.softplus(-rel) * gold).sum(axis=1)  # −log σ(x) over gold classes
    return th_term + pos_term


def mat_loss_negative(logits: Tensor, gold: np.ndarray) -> Tensor:
    """Per-pair −log softmax(TH) over {TH} ∪ non-gold classes."""
    _, th, gold = _split(logits, gold)
    keep = np.concatenate([gold == 0, np.ones((gold.shape[0], 1), dtype=bool)], axis=1)
    return ad.logsumexp(logits, axis=1, mask=keep) - th


def at_loss(logits: Tensor, gold: np.ndarray) -> Tensor:
    """Original adaptive-thresholding loss: one softmax over {TH} ∪ gold for all positives."""
    _, th, gold = _split(logits, gold)
    ones = np.ones((gold.shape[0], 1), dtype=bool)
    pos_mask = np.concatenate([gold > 0, ones], axis=1)
    log_p = logits - ad.logsumexp(logits, axis=1, mask=pos_mask).reshape(-1, 1)
    pos_gold = np.concatenate([gold, np.zeros((gold.shape[0], 1))], axis=1)
    positive = -(log_p * pos_gold).sum(axis=1)
    return positive + mat_loss_negative(logits, gold)


def total_loss(l_pos, l_neg, alpha: float = DEFAULT_ALPHA):
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * l_pos + (1 - alpha) * l_neg


def mat_loss(logits: Tensor, gold: np.ndarray, alpha: float = DEFAULT_ALPHA) -> Tensor:
    """Mean over pairs of α·L+ + (1 − α)·L−."""
    return total_loss(mat_loss_positive(logits, gold), mat_loss_negative(logits, gold), alpha).mean()


def predict(probabilities: np.ndarray, theta: float = DEFAULT_THETA):
    """Classes whose probability reaches (1 + θ)·P(TH); the TH probability is last.

    A 1-D input yields one set, a 2-D input a list of sets. Empty means NA.
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim == 1:
        return set(np.flatnonzero(probs[:-1] >= (1 + theta) * probs[-1]).tolist())
    hits = probs[:, :-1] >= (1 + theta) * probs[:, -1:]
    return [set(np.flatnonzero(row).tolist()) for row in hits]
