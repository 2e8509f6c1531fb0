"""Masked GCN encoder, graph readout, and classifier head.

The encoder runs on an EgoBatch: the disjoint union of one ego subgraph per
classified node, processed as a single gather-scatter graph. Layer l computes
H_l = relu(P_masked @ H_{l-1} @ W_l) with dropout between layers (training
only) and no nonlinearity after the final layer; P_masked is the renormalized
propagation with per-edge weights. The readout concatenates the ego row with
the subgraph mean and projects back to the embedding width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import Graph

__all__ = [
    "EgoBatch",
    "build_ego_cache",
    "batch_from_cache",
    "batch_from_graphs",
    "glorot",
    "init_gcn_weights",
    "init_readout_params",
    "init_head_params",
    "gcn_forward",
    "readout",
    "classify",
]


@dataclass
class EgoBatch:
    """Disjoint union of ego subgraphs plus per-graph bookkeeping."""

    plan: ad.PropagationPlan
    features: np.ndarray
    endpoints: np.ndarray
    segments: np.ndarray
    ego_rows: np.ndarray
    ego_labels: np.ndarray
    num_graphs: int


def build_ego_cache(g: Graph, hops: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-node (member ids, local edges) for every ego subgraph.

    Local ids follow BFS order with the ego at 0, matching ego_subgraph.
    """
    from .graphs import ego_subgraph

    cache = []
    for node in range(g.num_nodes):
        sub, mapping = ego_subgraph(g, node, hops)
        cache.append((mapping, sub.edges))
    return cache


def _assemble(g: Graph, entries, nodes) -> EgoBatch:
    nodes = np.asarray(nodes, dtype=np.int64).reshape(-1)
    sizes = np.array([entries[i][0].shape[0] for i in nodes], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    total = int(sizes.sum())
    member_ids = np.concatenate([entries[i][0] for i in nodes])
    edge_chunks = [entries[i][1] + off for i, off in zip(nodes, offsets)
                   if entries[i][1].size]
    edges = (np.vstack(edge_chunks) if edge_chunks
             else np.zeros((0, 2), dtype=np.int64))
    segments = np.repeat(np.arange(nodes.shape[0]), sizes)
    return EgoBatch(
        plan=ad.PropagationPlan.from_edges(edges, total),
        features=g.features[member_ids],
        endpoints=edges,
        segments=segments,
        ego_rows=offsets,
        ego_labels=g.labels[nodes],
        num_graphs=int(nodes.shape[0]),
    )


def batch_from_cache(g: Graph, cache, nodes) -> EgoBatch:
    return _assemble(g, cache, nodes)


def batch_from_graphs(g: Graph, nodes, hops: int) -> EgoBatch:
    """Assemble a batch directly (no cache); convenience for small calls."""
    cache = {}
    for node in np.asarray(nodes, dtype=np.int64).reshape(-1):
        from .graphs import ego_subgraph

        sub, mapping = ego_subgraph(g, int(node), hops)
        cache[int(node)] = (mapping, sub.edges)
    return _assemble(g, cache, nodes)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=(fan_in, fan_out))


def init_gcn_weights(rng: np.random.Generator, in_dim: int, hidden: int,
                     layers: int, prefix: str) -> dict[str, np.ndarray]:
    """Layer weights in -> hidden -> ... -> hidden (embedding width = hidden)."""
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    params = {}
    dims = [in_dim] + [hidden] * layers
    for l in range(layers):
        params[f"{prefix}.w{l}"] = glorot(rng, dims[l], dims[l + 1])
    return params


def init_readout_params(rng: np.random.Generator, dim: int, prefix: str) -> dict:
    return {f"{prefix}.proj": glorot(rng, 2 * dim, dim)}


def init_head_params(rng: np.random.Generator, in_dim: int, num_classes: int,
                     prefix: str) -> dict:
    return {
        f"{prefix}.w": glorot(rng, in_dim, num_classes),
        f"{prefix}.b": np.zeros((1, num_classes)),
    }


def gcn_forward(batch: EgoBatch, x: ad.Tensor, edge_weights, feature_mask,
                layer_weights: list[ad.Tensor], dropout_rate: float = 0.0,
                rng: np.random.Generator | None = None,
                training: bool = False) -> ad.Tensor:
    """Node embeddings for every node in the batch union graph.

    edge_weights: (num_und_edges, 1) tensor or None for the unit operator.
    feature_mask: (1, d) tensor or None; multiplies the input features.
    """
    h = x if feature_mask is None else ad.multiply(x, feature_mask)
    last = len(layer_weights) - 1
    for l, w in enumerate(layer_weights):
        h = ad.masked_propagate(h, edge_weights, batch.plan)
        h = ad.matmul(h, w)
        if l < last:
            h = ad.relu(h)
            if training and dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("training dropout needs an rng")
                h = ad.dropout(h, dropout_rate, rng)
    return h


def readout(batch: EgoBatch, node_embeddings: ad.Tensor,
            projection: ad.Tensor) -> ad.Tensor:
    """Per-graph embedding: concat(ego row, subgraph mean) @ projection."""
    ego = ad.take_rows(node_embeddings, batch.ego_rows)
    mean_emb = ad.segment_mean_rows(node_embeddings, batch.segments,
                                    batch.num_graphs)
    return ad.matmul(ad.concat_cols(ego, mean_emb), projection)


def classify(embedding: ad.Tensor, head_w: ad.Tensor, head_b: ad.Tensor) -> ad.Tensor:
    """Class distribution rows: softmax(embedding @ W + b)."""
    return ad.row_softmax(ad.add(ad.matmul(embedding, head_w), head_b))
