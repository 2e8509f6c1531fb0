"""Synthetic benchmark generators: motif-on-base graphs, heterophily
relabeling, and a planted-shortcut fixture.

The motif-on-base family attaches small labeled motifs (cycles, grids,
houses) to a tree or preferential-attachment base. Labels follow the block
structure, so the baseline graphs are strongly homophilous; the greedy
relabeler then pushes label heterophily up to a requested level without
touching the topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from .graphs import Graph, GraphError, label_heterophily

__all__ = [
    "MotifSpec",
    "GenConfig",
    "generate",
    "preset",
    "PRESET_NAMES",
    "RelabelResult",
    "relabel_to_heterophily",
    "PlantedShortcutConfig",
    "PlantedShortcut",
    "planted_shortcut",
]

_HOUSE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1))
# House positions: 4 is the apex, 0-1 the mid nodes it rests on, 2-3 the floor.
HOUSE_ROLES = {4: 1, 0: 2, 1: 2, 2: 3, 3: 3}

PRESET_NAMES = ("tree_cycles", "tree_grid", "ba_shapes", "ba_community")


@dataclass(frozen=True)
class MotifSpec:
    """Shape and labeling of one attached motif.

    kind: "cycle", "grid", or "house".
    labeling: a single class id applied to every motif node, or a mapping
    from motif position to class id covering every position exactly once.
    """

    kind: str
    cycle_length: int = 6
    grid_rows: int = 3
    grid_cols: int = 3
    labeling: object = 1

    def size(self) -> int:
        if self.kind == "cycle":
            return self.cycle_length
        if self.kind == "grid":
            return self.grid_rows * self.grid_cols
        if self.kind == "house":
            return 5
        raise GraphError(f"unknown motif kind {self.kind!r}")

    def internal_edges(self) -> list[tuple[int, int]]:
        if self.kind == "cycle":
            k = self.cycle_length
            if k < 3:
                raise GraphError(f"cycle motif needs length >= 3, got {k}")
            return [(i, (i + 1) % k) for i in range(k)]
        if self.kind == "grid":
            r, c = self.grid_rows, self.grid_cols
            if r < 1 or c < 1:
                raise GraphError(f"grid motif needs positive dims, got {r}x{c}")
            edges = []
            for i in range(r):
                for j in range(c):
                    if j + 1 < c:
                        edges.append((i * c + j, i * c + j + 1))
                    if i + 1 < r:
                        edges.append((i * c + j, (i + 1) * c + j))
            return edges
        if self.kind == "house":
            return [tuple(e) for e in _HOUSE_EDGES]
        raise GraphError(f"unknown motif kind {self.kind!r}")

    def labels(self) -> np.ndarray:
        n = self.size()
        if isinstance(self.labeling, int):
            return np.full(n, self.labeling, dtype=np.int64)
        mapping = dict(self.labeling)
        if sorted(mapping) != list(range(n)):
            raise GraphError(
                f"role labeling must cover positions 0..{n - 1} exactly once"
            )
        return np.array([mapping[i] for i in range(n)], dtype=np.int64)


@dataclass(frozen=True)
class GenConfig:
    """Recipe for one motif-on-base synthetic graph."""

    base_kind: str
    base_size: int
    motif: MotifSpec
    motif_count: int
    attachment: str = "uniform_base"
    feature_rule: str = "block_kind"
    feature_dim: int = 10
    feature_contrast: float = 1.0
    base_label: int = 0
    ba_attach_edges: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.base_kind not in ("tree", "barabasi_albert"):
            raise GraphError(f"unknown base kind {self.base_kind!r}")
        if self.base_size < 1:
            raise GraphError("base_size must be >= 1")
        if self.motif_count < 1:
            raise GraphError("motif_count must be >= 1")
        if self.attachment != "uniform_base":
            raise GraphError(f"unknown attachment rule {self.attachment!r}")
        if self.feature_rule not in ("block_kind", "uniform_ones"):
            raise GraphError(f"unknown feature rule {self.feature_rule!r}")
        if self.feature_dim < 1:
            raise GraphError("feature_dim must be >= 1")
        if self.base_kind == "barabasi_albert" and self.base_size <= self.ba_attach_edges:
            raise GraphError("barabasi_albert base needs base_size > ba_attach_edges")


def _tree_edges(n: int) -> list[tuple[int, int]]:
    """Balanced binary tree on nodes 0..n-1 (children of i are 2i+1, 2i+2)."""
    edges = []
    for i in range(n):
        for child in (2 * i + 1, 2 * i + 2):
            if child < n:
                edges.append((i, child))
    return edges


def _base_edges(config: GenConfig, rng: np.random.Generator) -> list[tuple[int, int]]:
    if config.base_kind == "tree":
        return _tree_edges(config.base_size)
    seed = int(rng.integers(0, 2**31 - 1))
    g = nx.barabasi_albert_graph(config.base_size, config.ba_attach_edges, seed=seed)
    return [tuple(sorted(e)) for e in g.edges()]


def generate(config: GenConfig) -> tuple[Graph, dict[int, int]]:
    """Build the motif-on-base graph described by `config`.

    Returns (graph, blocks) where blocks maps each node to its block id:
    0 for the base, k >= 1 for the k-th motif instance.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    motif_labels = config.motif.labels()
    motif_size = config.motif.size()

    edges = _base_edges(config, rng)
    labels = [config.base_label] * config.base_size
    blocks = {v: 0 for v in range(config.base_size)}

    next_id = config.base_size
    for k in range(config.motif_count):
        offset = next_id
        for u, v in config.motif.internal_edges():
            edges.append((offset + u, offset + v))
        anchor = int(rng.integers(0, config.base_size))
        edges.append((anchor, offset))
        labels.extend(int(c) for c in motif_labels)
        for p in range(motif_size):
            blocks[offset + p] = k + 1
        next_id += motif_size

    n = next_id
    features = np.ones((n, config.feature_dim), dtype=np.float64)
    if config.feature_rule == "block_kind":
        motif_nodes = np.array([v for v, b in blocks.items() if b > 0], dtype=np.int64)
        if motif_nodes.size:
            features[motif_nodes, 0] += config.feature_contrast

    labels_arr = np.array(labels, dtype=np.int64)
    g = Graph(
        num_nodes=n,
        edges=np.array(edges, dtype=np.int64),
        features=features,
        labels=labels_arr,
        num_classes=int(labels_arr.max()) + 1,
    )
    return g, blocks


def _merge_communities(parts: list[tuple[Graph, dict[int, int]]],
                       inter_density: float,
                       rng: np.random.Generator,
                       community_feature_offset: float) -> tuple[Graph, dict[int, int]]:
    g0, b0 = parts[0]
    g1, b1 = parts[1]
    n0, n1 = g0.num_nodes, g1.num_nodes
    edges = [tuple(e) for e in g0.edges]
    edges += [(int(u) + n0, int(v) + n0) for u, v in g1.edges]
    num_inter = int(round(inter_density * n0 * n1))
    if num_inter > 0:
        flat = rng.choice(n0 * n1, size=num_inter, replace=False)
        for f in np.sort(flat):
            edges.append((int(f) // n1, n0 + int(f) % n1))
    features = np.vstack([g0.features, g1.features + community_feature_offset])
    labels = np.concatenate([g0.labels, g1.labels + g0.num_classes])
    blocks = dict(b0)
    shift = max(b0.values()) + 1
    for v, b in b1.items():
        blocks[v + n0] = b + shift
    g = Graph(
        num_nodes=n0 + n1,
        edges=np.array(edges, dtype=np.int64),
        features=features,
        labels=labels,
        num_classes=g0.num_classes + g1.num_classes,
    )
    return g, blocks


def preset(name: str, seed: int = 0, feature_rule: str = "block_kind",
           inter_density: float = 8e-4) -> tuple[Graph, dict[int, int]]:
    """Named benchmark graphs.

    tree_cycles: depth-8 binary tree base (511 nodes) + 80 six-node cycles.
    tree_grid:   same base + 80 3x3 grids.
    ba_shapes:   300-node preferential-attachment base + 80 five-node houses
                 (apex class 1, mid class 2, floor class 3, base class 0).
    ba_community: two ba_shapes communities, class ids offset by 4, features
                 offset per community, joined by sparse random edges.
    """
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(3)
    if name == "tree_cycles":
        cfg = GenConfig("tree", 511, MotifSpec("cycle", cycle_length=6, labeling=1),
                        80, feature_rule=feature_rule,
                        seed=int(children[0].generate_state(1)[0]))
        return generate(cfg)
    if name == "tree_grid":
        cfg = GenConfig("tree", 511, MotifSpec("grid", grid_rows=3, grid_cols=3, labeling=1),
                        80, feature_rule=feature_rule,
                        seed=int(children[0].generate_state(1)[0]))
        return generate(cfg)
    if name == "ba_shapes":
        cfg = GenConfig("barabasi_albert", 300,
                        MotifSpec("house", labeling=HOUSE_ROLES), 80,
                        feature_rule=feature_rule,
                        seed=int(children[0].generate_state(1)[0]))
        return generate(cfg)
    if name == "ba_community":
        parts = []
        for child in children[:2]:
            cfg = GenConfig("barabasi_albert", 300,
                            MotifSpec("house", labeling=HOUSE_ROLES), 80,
                            feature_rule=feature_rule,
                            seed=int(child.generate_state(1)[0]))
            parts.append(generate(cfg))
        rng = np.random.default_rng(children[2].generate_state(1)[0])
        return _merge_communities(parts, inter_density, rng,
                                  community_feature_offset=2.0)
    raise GraphError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


@dataclass
class RelabelResult:
    graph: Graph
    reached: bool
    rounds: int
    history: list[float] = field(default_factory=list)


def relabel_to_heterophily(g: Graph, target: float | None = None, seed: int = 0,
                           max_stale_rounds: int = 50) -> RelabelResult:
    """Greedily reassign labels to raise label heterophily.

    Each round visits nodes in a seeded random order and gives every node the
    class that currently agrees with the fewest of its neighbors (ties to the
    lowest class id). Each reassignment is individually non-decreasing in the
    mismatched-edge count, so per-round heterophily is monotone. With a
    target, the sweep stops as soon as the running heterophily reaches it;
    without one, it stops after `max_stale_rounds` rounds with no increase.
    Returns the relabeled graph plus a flag saying whether the target was met
    (best effort otherwise).
    """
    if g.num_edges == 0:
        raise GraphError("relabeling needs at least one edge")
    if g.num_classes < 2:
        raise GraphError("relabeling needs at least two classes")
    if target is not None and not 0.0 <= target <= 1.0:
        raise GraphError(f"target heterophily must be in [0, 1], got {target}")

    rng = np.random.default_rng(seed)
    labels = g.labels.copy()
    num_edges = g.num_edges
    u, v = (g.edges[:, 0], g.edges[:, 1]) if num_edges else (None, None)
    mismatches = int(np.sum(labels[u] != labels[v]))
    history: list[float] = []
    best = mismatches
    stale = 0
    rounds = 0

    def done(m: int) -> bool:
        return target is not None and m / num_edges >= target - 1e-12

    if done(mismatches):
        return RelabelResult(g.with_labels(labels), True, 0, [mismatches / num_edges])

    while True:
        rounds += 1
        for node in rng.permutation(g.num_nodes):
            nbrs = g.neighbors(int(node))
            if nbrs.size == 0:
                continue
            counts = np.bincount(labels[nbrs], minlength=g.num_classes)
            new = int(np.argmin(counts))
            old = int(labels[node])
            if new != old:
                mismatches += int(counts[old]) - int(counts[new])
                labels[node] = new
            if done(mismatches):
                history.append(mismatches / num_edges)
                return RelabelResult(g.with_labels(labels), True, rounds, history)
        history.append(mismatches / num_edges)
        if mismatches > best:
            best = mismatches
            stale = 0
        else:
            stale += 1
        if stale >= max_stale_rounds:
            reached = target is None or done(mismatches)
            return RelabelResult(g.with_labels(labels), reached, rounds, history)


@dataclass(frozen=True)
class PlantedShortcutConfig:
    """Fixture with a perfectly predictive causal pattern and a louder decoy.

    Every classified node sits in its own small component. The causal
    pattern is a two-part rotation code spread over the `causal_leaves`
    pendant neighbors: even-indexed leaves carry a unit one-hot of the
    rotated class (label + rotation mod C, dims [0, C)), odd-indexed leaves
    a unit one-hot of the rotation itself (dims [C, 2C)). Neither leaf
    alone says anything about the label; together they determine it
    exactly, so a lookup classifier on the pair is exact while a linear
    reader learns nothing fast. A ring of `shortcut_size` nodes, present on
    100% of components so its presence carries no label information,
    broadcasts a high-magnitude one-hot of a decoy class in the same
    dims [0, C) as the rotated-class code. The decoy agrees with the label
    only `shortcut_agreement` of the time, yet it is the loudest and the
    only linearly readable signal, and it buries the quiet rotated-class
    bit for any reader that cannot drop the ring edges.
    """

    num_egos: int = 60
    num_classes: int = 2
    causal_leaves: int = 2
    shortcut_size: int = 4
    shortcut_magnitude: float = 3.0
    magnitude_jitter: float = 0.5
    shortcut_agreement: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.num_egos < 2:
            raise GraphError("num_egos must be >= 2")
        if self.num_classes < 2:
            raise GraphError("num_classes must be >= 2")
        if self.causal_leaves < 2:
            raise GraphError("causal_leaves must be >= 2 to carry both "
                             "halves of the rotation code")
        if self.shortcut_size < 2:
            raise GraphError("shortcut_size must be >= 2")
        if not 0.0 <= self.shortcut_agreement <= 1.0:
            raise GraphError("shortcut_agreement must be in [0, 1]")


@dataclass
class PlantedShortcut:
    graph: Graph
    ego_nodes: np.ndarray
    causal_edges: np.ndarray
    shortcut_edges: np.ndarray
    decoy_classes: np.ndarray


def planted_shortcut(config: PlantedShortcutConfig) -> PlantedShortcut:
    """Build the planted-shortcut fixture described by `config`."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    C = config.num_classes
    dim = 2 * C + 2  # rotated-class/decoy dims, rotation dims, ego, constant
    per = 1 + config.causal_leaves + config.shortcut_size
    n = config.num_egos * per

    reps = math.ceil(config.num_egos / C)
    y = rng.permutation(np.tile(np.arange(C), reps)[: config.num_egos])
    flip = rng.random(config.num_egos) >= config.shortcut_agreement
    shift = rng.integers(1, C, size=config.num_egos)
    z = np.where(flip, (y + shift) % C, y)
    rot = rng.integers(0, C, size=config.num_egos)

    features = np.zeros((n, dim), dtype=np.float64)
    labels = np.zeros(n, dtype=np.int64)
    edges: list[tuple[int, int]] = []
    causal: list[tuple[int, int]] = []
    short: list[tuple[int, int]] = []
    egos = np.zeros(config.num_egos, dtype=np.int64)

    for e in range(config.num_egos):
        base = e * per
        ego = base
        egos[e] = ego
        leaves = range(base + 1, base + 1 + config.causal_leaves)
        ring = range(base + 1 + config.causal_leaves, base + per)
        labels[base: base + per] = y[e]

        features[ego, 2 * C] = 1.0
        features[ego, 2 * C + 1] = 1.0
        for k, leaf in enumerate(leaves):
            if k % 2 == 0:
                features[leaf, (y[e] + rot[e]) % C] = 1.0
            else:
                features[leaf, C + rot[e]] = 1.0
            features[leaf, 2 * C + 1] = 1.0
            edges.append((ego, leaf))
            causal.append((ego, leaf))
        ring = list(ring)
        for s in ring:
            mag = config.shortcut_magnitude + config.magnitude_jitter * (
                2.0 * rng.random() - 1.0
            )
            features[s, z[e]] = mag
            features[s, 2 * C + 1] = 1.0
            edges.append((ego, s))
            short.append((ego, s))
        for i in range(len(ring)):
            a, b = ring[i], ring[(i + 1) % len(ring)]
            if len(ring) == 2 and i == 1:
                break
            edges.append((min(a, b), max(a, b)))
            short.append((min(a, b), max(a, b)))

    g = Graph(
        num_nodes=n,
        edges=np.array(edges, dtype=np.int64),
        features=features,
        labels=labels,
        num_classes=C,
    )
    return PlantedShortcut(
        graph=g,
        ego_nodes=egos,
        causal_edges=np.array(sorted(set(map(tuple, map(sorted, causal)))), dtype=np.int64),
        shortcut_edges=np.array(sorted(set(map(tuple, map(sorted, short)))), dtype=np.int64),
        decoy_classes=z,
    )
