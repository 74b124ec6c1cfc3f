"""Relation feature propagation over the correlation graph with multi-head graph attention.

Node i attends over N(i) = {j : R_ij > 0}. In ``"reweight"`` mode the learned
attention is multiplied by R_ij and renormalized over N(i); in ``"mask"`` mode
R only supplies the neighbourhood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

MODES = ("reweight", "mask")


@dataclass(frozen=True)
class GatConfig:
    d_rel: int = 500
    d_head: int = 500
    heads: int = 2
    layers: int = 2
    slope: float = 0.2
    mode: str = "reweight"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"GAT mode must be one of {MODES}, got {self.mode!r}")
        if self.heads < 1 or self.layers < 0:
            raise ValueError("GAT needs heads >= 1 and layers >= 0")


def init_relation_features(r: int, d_rel: int, seed: int | np.random.Generator) -> Tensor:
    rng = np.random.default_rng(seed)
    return Tensor(ad.truncated_normal(rng, (r, d_rel)), "relation_features")


def layer_widths(cfg: GatConfig, d_out: int) -> list[tuple[int, int, bool]]:
    """(input width, per-head width, is_final) for each layer of the stack."""
    widths = []
    d_in = cfg.d_rel
    for layer in range(cfg.layers):
        final = layer == cfg.layers - 1
        d_head = d_out if final else cfg.d_head
        widths.append((d_in, d_head, final))
        d_in = d_head * cfg.heads
    return widths


def init_gat_params(rng: np.random.Generator, cfg: GatConfig, d_out: int) -> dict[str, Tensor]:
    params = {}
    if cfg.layers == 0:
        params["gat_proj"] = Tensor(ad.glorot_uniform(rng, (cfg.d_rel, d_out)), "gat_proj")
        return params
    for layer, (d_in, d_head, _) in enumerate(layer_widths(cfg, d_out)):
        for k in range(cfg.heads):
            name = f"gat{layer}_h{k}"
            params[f"{name}_W"] = Tensor(ad.glorot_uniform(rng, (d_in, d_head)), f"{name}_W")
            a = ad.glorot_uniform(rng, (2 * d_head, 1)).reshape(-1)
            params[f"{name}_a"] = Tensor(a, f"{name}_a")
    return params


def attention(z: Tensor, a: Tensor, R: np.ndarray, slope: float, mode: str) -> Tensor:
    """Row-stochastic (r, r) weights of one head, zero outside the support of R."""
    d = z.shape[1]
    src = ad.matmul(z, a[:d])
    dst = ad.matmul(z, a[d:])
    scores = ad.leaky_relu(src.reshape(-1, 1) + dst.reshape(1, -1), slope)
    support = R > 0
    alpha = ad.softmax_masked(scores, support, axis=1)
    if mode == "mask":
        return alpha
    weighted = alpha * R
    return weighted / weighted.sum(axis=1, keepdims=True)


def gat_layer(
    H: Tensor,
    R: np.ndarray,
    weights: list[Tensor],
    attn: list[Tensor],
    *,
    combine: str = "concat",
    activation=None,
    slope: float = 0.2,
    mode: str = "reweight",
    return_attention: bool = False,
):
    """One multi-head attention layer over the relation graph.

    ``combine`` is ``"concat"`` (hidden layers) or ``"mean"`` (final layer).
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (H.shape[0], H.shape[0]):
        raise ShapeError(f"graph {R.shape} does not match {H.shape[0]} relation rows")
    outs, alphas = [], []
    for W, a in zip(weights, attn):
        if W.shape[0] != H.shape[1]:
            raise ShapeError(f"GAT weight {W.shape} does not accept width {H.shape[1]}")
        z = ad.matmul(H, W)
        alpha = attention(z, a, R, slope, mode)
        alphas.append(alpha)
        outs.append(ad.matmul(alpha, z))
    if combine == "concat":
        out = outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)
    elif combine == "mean":
        out = outs[0]
        for o in outs[1:]:
            out = out + o
        out = out * (1.0 / len(outs))
    else:
        raise ValueError(f"unknown head combination {combine!r}")
    if activation is not None:
        out = activation(out)
    return (out, alphas) if return_attention else out


def propagate(
    features: Tensor, R: np.ndarray, params: dict[str, Tensor], cfg: GatConfig, d_out: int
) -> Tensor:
    """Stack of GAT layers (ELU between layers) mapping (r, d_rel) -> (r, d_out)."""
    if features.shape[1] != cfg.d_rel:
        raise ShapeError(f"relation features width {features.shape[1]} != d_rel {cfg.d_rel}")
    if cfg.layers == 0:
        return ad.matmul(features, params["gat_proj"])
    h = features
    for layer, (_, _, final) in enumerate(layer_widths(cfg, d_out)):
        names = [f"gat{layer}_h{k}" for k in range(cfg.heads)]
        h = gat_layer(
            h,
            R,
            [params[f"{n}_W"] for n in names],
            [params[f"{n}_a"] for n in names],
            combine="mean" if final else "concat",
            activation=None if final else ad.elu,
            slope=cfg.slope,
            mode=cfg.mode,
        )
    return h
