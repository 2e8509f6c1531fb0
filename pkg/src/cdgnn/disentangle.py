"""Mask pair, branch embeddings, and the disentanglement losses.

A single learned scorer drives both branches: each edge gets a logit from a
two-layer MLP on the concatenated endpoint input features (symmetrized by
averaging both endpoint orders), and a shared logit vector masks feature
columns. sigmoid(logit) weights the causal branch; the complement weights the
shortcut branch, so the two masked weight tables tile the unmasked graph.

Losses: a generalized cross-entropy (GCE) term that lets the shortcut branch
latch onto easy signal, a difficulty-weighted cross-entropy for the causal
branch, a counterfactual term that swaps shortcut embeddings across the
batch, and an HSIC penalty driving the branch embeddings independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .graphs import Graph
from .models import EgoBatch, classify, gcn_forward, glorot, readout

__all__ = [
    "init_mask_params",
    "MaskSet",
    "edge_score_logits",
    "materialize_masks",
    "BranchBundle",
    "split_and_embed",
    "gce_loss",
    "cross_entropy",
    "gce_grad_identity_check",
    "difficulty_weights",
    "causal_loss",
    "counterfactual_loss",
    "median_bandwidth",
    "hsic",
    "hsic_value",
    "total_loss",
    "score_edges",
    "disentanglement_score",
]

_CE_EPS = 1e-12


def init_mask_params(rng: np.random.Generator, feat_dim: int,
                     scorer_hidden: int = 16) -> dict[str, np.ndarray]:
    """Scorer MLP weights plus feature-mask logits.

    The output layer starts at zero so every edge and feature logit is
    exactly 0 (mask 1/2, a neutral gate): both branches begin with the
    same half-weighted view, and the split direction is decided by the
    losses instead of an initialization lottery on feature magnitudes.
    """
    return {
        "mask.w1": glorot(rng, 2 * feat_dim, scorer_hidden),
        "mask.b1": np.zeros((1, scorer_hidden)),
        "mask.w2": np.zeros((scorer_hidden, 1)),
        "mask.b2": np.zeros((1, 1)),
        "mask.feat": np.zeros((1, feat_dim)),
    }


def edge_score_logits(batch: EgoBatch, x: np.ndarray,
                      params: dict[str, ad.Tensor]) -> ad.Tensor:
    """Symmetric per-edge logits: mean of scorer(x_u||x_v) and scorer(x_v||x_u)."""
    e = batch.endpoints
    num = e.shape[0]
    tape = params["mask.w1"].tape
    if num == 0:
        return ad.Tensor(np.zeros((0, 1)), tape=tape, requires_grad=False)
    pairs = np.vstack([
        np.hstack([x[e[:, 0]], x[e[:, 1]]]),
        np.hstack([x[e[:, 1]], x[e[:, 0]]]),
    ])
    hidden = ad.relu(ad.add(ad.matmul(pairs, params["mask.w1"]), params["mask.b1"]))
    scores = ad.add(ad.matmul(hidden, params["mask.w2"]), params["mask.b2"])
    fwd = ad.take_rows(scores, np.arange(num))
    rev = ad.take_rows(scores, np.arange(num, 2 * num))
    return ad.multiply(ad.add(fwd, rev), 0.5)


@dataclass
class MaskSet:
    """Materialized masks for one batch: causal side and its complement."""

    edge: ad.Tensor
    edge_complement: ad.Tensor
    feature: ad.Tensor
    feature_complement: ad.Tensor


def materialize_masks(batch: EgoBatch, params: dict[str, ad.Tensor]) -> MaskSet:
    edge = ad.sigmoid(edge_score_logits(batch, batch.features, params))
    feat = ad.sigmoid(params["mask.feat"])
    return MaskSet(
        edge=edge,
        edge_complement=ad.subtract(1.0, edge),
        feature=feat,
        feature_complement=ad.subtract(1.0, feat),
    )


@dataclass
class BranchBundle:
    """Embeddings produced by the two masked branches for one batch."""

    graph_causal: ad.Tensor
    graph_shortcut: ad.Tensor
    joint: ad.Tensor
    nodes_causal: ad.Tensor
    nodes_shortcut: ad.Tensor


def split_and_embed(batch: EgoBatch, x: ad.Tensor, masks: MaskSet,
                    causal_layers: list[ad.Tensor], shortcut_layers: list[ad.Tensor],
                    causal_projection: ad.Tensor, shortcut_projection: ad.Tensor,
                    dropout_rate: float = 0.0,
                    rng: np.random.Generator | None = None,
                    training: bool = False) -> BranchBundle:
    """Run both masked branches and bundle graph/node embeddings."""
    nodes_c = gcn_forward(batch, x, masks.edge, masks.feature, causal_layers,
                          dropout_rate, rng, training)
    nodes_s = gcn_forward(batch, x, masks.edge_complement, masks.feature_complement,
                          shortcut_layers, dropout_rate, rng, training)
    h_c = readout(batch, nodes_c, causal_projection)
    h_s = readout(batch, nodes_s, shortcut_projection)
    return BranchBundle(
        graph_causal=h_c,
        graph_shortcut=h_s,
        joint=ad.concat_cols(h_c, h_s),
        nodes_causal=nodes_c,
        nodes_shortcut=nodes_s,
    )


def gce_loss(probs: ad.Tensor, labels, q: float) -> ad.Tensor:
    """Per-sample generalized cross-entropy (1 - p_y^q) / q, shape (B, 1).

    The power is computed as exp(q * log p) with the log clamped at 1e-12.
    At q = 1 this is 1 - p_y; as q -> 0 it approaches the cross-entropy.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    p = ad.pick_class(probs, labels)
    amplified = ad.exp(ad.multiply(q, ad.log(p)))
    return ad.multiply(ad.subtract(1.0, amplified), 1.0 / q)


def cross_entropy(probs: ad.Tensor, labels) -> ad.Tensor:
    """Per-sample cross-entropy -log p_y, shape (B, 1)."""
    return ad.subtract(0.0, ad.log(ad.pick_class(probs, labels)))


def gce_grad_identity_check(params: dict[str, np.ndarray], forward, label: int,
                            q: float) -> float:
    """Max parameterwise deviation of grad GCE from p_y^q * grad CE.

    `forward(tensors)` must return a (1, C) probability row built from the
    given parameter tensors. The two gradients are taken on independent
    tapes from identical parameter values.
    """
    tape_a = ad.Tape()
    tensors_a = {k: tape_a.leaf(v.copy()) for k, v in params.items()}
    probs_a = forward(tensors_a)
    loss_a = ad.mean(gce_loss(probs_a, [label], q))
    p_y = float(probs_a.data[0, label])
    grads_a = ad.gradients(tape_a, loss_a, tensors_a)

    tape_b = ad.Tape()
    tensors_b = {k: tape_b.leaf(v.copy()) for k, v in params.items()}
    probs_b = forward(tensors_b)
    loss_b = ad.mean(cross_entropy(probs_b, [label]))
    grads_b = ad.gradients(tape_b, loss_b, tensors_b)

    scale = p_y**q
    dev = 0.0
    for k in params:
        dev = max(dev, float(np.max(np.abs(grads_a[k] - scale * grads_b[k]))))
    return dev


def difficulty_weights(ce_shortcut: np.ndarray, ce_causal: np.ndarray) -> np.ndarray:
    """Relative difficulty W = CE_s / (CE_s + CE_c), 0/0 resolved to 0.5.

    Inputs are detached per-sample cross-entropy values; the weight is a
    stop-gradient quantity by construction.
    """
    s = np.asarray(ce_shortcut, dtype=np.float64).reshape(-1)
    c = np.asarray(ce_causal, dtype=np.float64).reshape(-1)
    if (s < 0).any() or (c < 0).any():
        raise ValueError("cross-entropy values must be nonnegative")
    denom = s + c
    out = np.full(s.shape, 0.5)
    ok = denom > _CE_EPS
    out[ok] = s[ok] / denom[ok]
    return out


def causal_loss(probs_causal: ad.Tensor, labels, weights) -> ad.Tensor:
    """Difficulty-weighted mean cross-entropy of the causal head."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    ce = cross_entropy(probs_causal, labels)
    if w.shape[0] != ce.data.shape[0]:
        raise ValueError("one weight per sample required")
    return ad.mean(ad.multiply(ce, w))


def counterfactual_loss(bundle: BranchBundle, head_s: tuple[ad.Tensor, ad.Tensor],
                        head_c: tuple[ad.Tensor, ad.Tensor], labels,
                        q: float, perm: np.ndarray, weights) -> ad.Tensor:
    """Counterfactual pairing loss over one batch permutation.

    Builds h_ct = [h_causal_i ; h_shortcut_perm(i)] and averages
    GCE(shortcut head, permuted labels) + W_i * CE(causal head, original
    labels); W comes from the unpermuted bundle. Needs batch size >= 2.
    """
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = bundle.graph_causal.data.shape[0]
    if n < 2:
        raise ValueError("counterfactual loss needs a batch of at least 2")
    perm = np.asarray(perm, dtype=np.int64).reshape(-1)
    if perm.shape[0] != n:
        raise ValueError("perm must cover the batch")
    h_ct = ad.concat_cols(bundle.graph_causal,
                          ad.permute_rows(bundle.graph_shortcut, perm))
    probs_s = classify(h_ct, head_s[0], head_s[1])
    probs_c = classify(h_ct, head_c[0], head_c[1])
    gce = gce_loss(probs_s, y[perm], q)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    ce = ad.multiply(cross_entropy(probs_c, y), w)
    return ad.mean(ad.add(gce, ce))


def median_bandwidth(x: np.ndarray) -> float:
    """Median-heuristic RBF bandwidth: sqrt(median squared distance / 2)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        return 1.0
    sq = (arr * arr).sum(axis=1, keepdims=True)
    d2 = np.maximum(sq + sq.T - 2.0 * arr @ arr.T, 0.0)
    med = float(np.median(d2[np.triu_indices(arr.shape[0], k=1)]))
    if med <= 0.0:
        return 1.0
    return float(np.sqrt(med / 2.0))


def hsic(x: ad.Tensor, y: ad.Tensor, bandwidth_x: float | None = None,
         bandwidth_y: float | None = None) -> ad.Tensor:
    """Biased HSIC estimate between aligned rows of x and y.

    (1/(n-1))^2 * trace(Kx H Ky H) with RBF kernels; bandwidths default to
    the median heuristic on the detached values. The trace is evaluated as
    an elementwise product of the centered grams (identical by symmetry and
    idempotence of H).
    """
    n = x.data.shape[0]
    if n < 2:
        raise ValueError(f"hsic needs at least 2 rows, got {n}")
    if y.data.shape[0] != n:
        raise ValueError("hsic inputs must have the same number of rows")
    bx = median_bandwidth(x.data) if bandwidth_x is None else float(bandwidth_x)
    by = median_bandwidth(y.data) if bandwidth_y is None else float(bandwidth_y)
    kx = ad.center_gram(ad.rbf_gram(x, bx))
    ky = ad.center_gram(ad.rbf_gram(y, by))
    return ad.multiply(ad.sum_all(ad.multiply(kx, ky)), 1.0 / (n - 1.0) ** 2)


def hsic_value(x: np.ndarray, y: np.ndarray, bandwidth_x: float | None = None,
               bandwidth_y: float | None = None) -> float:
    """Plain-array HSIC (same estimator as hsic(), no tape)."""
    tape = ad.Tape()
    return hsic(tape.leaf(np.asarray(x, dtype=np.float64), requires_grad=False),
                tape.leaf(np.asarray(y, dtype=np.float64), requires_grad=False),
                bandwidth_x, bandwidth_y).item()


@dataclass(frozen=True)
class LossSettings:
    q: float = 0.7
    lambda_counterfactual: float = 10.0
    lambda_independence: float = 0.1
    no_shortcut_term: bool = False
    no_causal_term: bool = False
    no_counterfactual_term: bool = False
    no_independence_term: bool = False


def total_loss(shortcut_term: ad.Tensor, causal_term: ad.Tensor,
               counterfactual_term: ad.Tensor, independence_term: ad.Tensor,
               settings: LossSettings) -> tuple[ad.Tensor, dict[str, float]]:
    """Weighted objective plus a raw-value breakdown.

    Ablation flags and zero lambdas drop a term from the objective; every
    term's raw value is still reported so ablated runs stay comparable.
    """
    breakdown = {
        "loss_s": shortcut_term.item(),
        "loss_c": causal_term.item(),
        "loss_cf": counterfactual_term.item(),
        "loss_hsic": independence_term.item(),
    }
    pieces: list[ad.Tensor] = []
    if not settings.no_shortcut_term:
        pieces.append(shortcut_term)
    if not settings.no_causal_term:
        pieces.append(causal_term)
    if not settings.no_counterfactual_term and settings.lambda_counterfactual != 0.0:
        pieces.append(ad.multiply(counterfactual_term, settings.lambda_counterfactual))
    if not settings.no_independence_term and settings.lambda_independence != 0.0:
        pieces.append(ad.multiply(independence_term, settings.lambda_independence))
    if not pieces:
        raise ValueError("all loss terms ablated")
    total = pieces[0]
    for p in pieces[1:]:
        total = ad.add(total, p)
    breakdown["total"] = total.item()
    return total, breakdown


def score_edges(mask_params: dict[str, np.ndarray], features: np.ndarray,
                edges: np.ndarray) -> np.ndarray:
    """Symmetric scorer logits for explicit edges, no tape involved."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    x = np.asarray(features, dtype=np.float64)
    pairs = np.vstack([
        np.hstack([x[e[:, 0]], x[e[:, 1]]]),
        np.hstack([x[e[:, 1]], x[e[:, 0]]]),
    ])
    hidden = np.maximum(pairs @ mask_params["mask.w1"] + mask_params["mask.b1"], 0.0)
    scores = hidden @ mask_params["mask.w2"] + mask_params["mask.b2"]
    n = e.shape[0]
    return 0.5 * (scores[:n, 0] + scores[n:, 0])


def disentanglement_score(mask_params: dict[str, np.ndarray], g: Graph,
                          causal_edges: np.ndarray,
                          shortcut_edges: np.ndarray) -> float:
    """AUC that causal edges outscore shortcut edges under the edge scorer.

    Ties contribute 1/2 (rank-based Mann-Whitney estimate).
    """
    ce = np.asarray(causal_edges, dtype=np.int64).reshape(-1, 2)
    se = np.asarray(shortcut_edges, dtype=np.int64).reshape(-1, 2)
    if ce.shape[0] == 0 or se.shape[0] == 0:
        raise ValueError("both ground-truth edge sets must be non-empty")
    pos = score_edges(mask_params, g.features, ce)
    neg = score_edges(mask_params, g.features, se)
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[: pos.shape[0]].sum() - pos.shape[0] * (pos.shape[0] + 1) / 2.0
    return float(u / (pos.shape[0] * neg.shape[0]))
