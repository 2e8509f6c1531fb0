"""Ego batching, masked GCN forward, readout, and the softmax head."""

import numpy as np
import pytest

from cdgnn import autodiff as ad
from cdgnn.graphs import Graph, renormalized_propagate
from cdgnn.models import (
    batch_from_cache,
    batch_from_graphs,
    build_ego_cache,
    classify,
    gcn_forward,
    init_gcn_weights,
    init_head_params,
    init_readout_params,
    readout,
)


def _path_graph(n=4, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return Graph(n, np.array([(i, i + 1) for i in range(n - 1)]),
                 rng.normal(size=(n, dim)), rng.integers(0, 2, size=n), 2)


def _forward_numpy(batch, feats, weights, edge_w=None, feat_mask=None):
    """Straight-line replica of the layer recurrence for oracle checks."""
    h = feats if feat_mask is None else feats * feat_mask
    deg = np.zeros(h.shape[0])
    for u, v in batch.endpoints:
        deg[u] += 1
        deg[v] += 1
    for l, w in enumerate(weights):
        out = h.copy()
        for e, (u, v) in enumerate(batch.endpoints):
            c = 1.0 if edge_w is None else edge_w[e]
            out[u] += c * h[v]
            out[v] += c * h[u]
        out = out / (deg + 1.0)[:, None]
        h = out @ w
        if l < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


class TestEgoBatch:
    def test_disjoint_union_shapes(self):
        g = _path_graph(5)
        batch = batch_from_graphs(g, np.array([0, 4]), hops=1)
        assert batch.num_graphs == 2
        assert batch.features.shape[0] == 4  # {0,1} and {4,3}
        assert batch.endpoints.shape[0] == 2
        assert batch.ego_rows.tolist() == [0, 2]
        np.testing.assert_array_equal(batch.ego_labels, g.labels[[0, 4]])
        np.testing.assert_array_equal(batch.segments, [0, 0, 1, 1])

    def test_cache_matches_direct_assembly(self):
        g = _path_graph(6, seed=3)
        cache = build_ego_cache(g, hops=2)
        nodes = np.array([1, 3, 5])
        a = batch_from_cache(g, cache, nodes)
        b = batch_from_graphs(g, nodes, hops=2)
        np.testing.assert_array_equal(a.endpoints, b.endpoints)
        np.testing.assert_allclose(a.features, b.features)
        np.testing.assert_array_equal(a.segments, b.segments)

    def test_ego_rows_point_at_ego_features(self):
        g = _path_graph(5, seed=4)
        batch = batch_from_graphs(g, np.array([2, 3]), hops=1)
        np.testing.assert_allclose(batch.features[batch.ego_rows[0]],
                                   g.features[2])
        np.testing.assert_allclose(batch.features[batch.ego_rows[1]],
                                   g.features[3])


class TestGcnForward:
    def test_ones_masks_match_unmasked(self):
        g = _path_graph(5, seed=5)
        batch = batch_from_graphs(g, np.arange(5), hops=2)
        rng = np.random.default_rng(0)
        weights_np = init_gcn_weights(rng, 3, 4, 2, "gnn")
        tape = ad.Tape()
        ws = [tape.leaf(weights_np[f"gnn.w{l}"]) for l in range(2)]
        x = tape.leaf(batch.features, requires_grad=False)
        ones_e = tape.leaf(np.ones((batch.endpoints.shape[0], 1)),
                           requires_grad=False)
        ones_f = tape.leaf(np.ones((1, 3)), requires_grad=False)
        masked = gcn_forward(batch, x, ones_e, ones_f, ws)
        plain = gcn_forward(batch, x, None, None, ws)
        np.testing.assert_allclose(masked.value(), plain.value(), atol=1e-12)

    def test_zero_edge_mask_isolates_nodes(self):
        g = _path_graph(4, seed=6)
        batch = batch_from_graphs(g, np.arange(4), hops=1)
        rng = np.random.default_rng(1)
        weights_np = init_gcn_weights(rng, 3, 3, 2, "gnn")
        tape = ad.Tape()
        ws = [tape.leaf(weights_np[f"gnn.w{l}"]) for l in range(2)]
        x = tape.leaf(batch.features, requires_grad=False)
        zeros = tape.leaf(np.zeros((batch.endpoints.shape[0], 1)),
                          requires_grad=False)
        out = gcn_forward(batch, x, zeros, None, ws)
        oracle = _forward_numpy(batch, batch.features,
                                [weights_np["gnn.w0"], weights_np["gnn.w1"]],
                                edge_w=np.zeros(batch.endpoints.shape[0]))
        np.testing.assert_allclose(out.value(), oracle, atol=1e-12)

    def test_single_layer_identity_weights_is_propagation(self):
        g = Graph(2, np.array([[0, 1]]), np.array([[1.0, 2.0], [3.0, 5.0]]),
                  np.zeros(2, int), 1)
        batch = batch_from_graphs(g, np.arange(2), hops=1)
        tape = ad.Tape()
        w = tape.leaf(np.eye(2), requires_grad=False)
        x = tape.leaf(batch.features, requires_grad=False)
        out = gcn_forward(batch, x, None, None, [w])
        # batch holds both ego copies; each copy is the 2-node graph itself
        oracle = renormalized_propagate(g, g.features)
        np.testing.assert_allclose(out.value()[:2], oracle[[0, 1]])

    def test_random_masks_match_numpy_oracle(self):
        g = _path_graph(6, seed=7)
        batch = batch_from_graphs(g, np.array([1, 4]), hops=2)
        rng = np.random.default_rng(2)
        weights_np = init_gcn_weights(rng, 3, 4, 2, "gnn")
        edge_w = rng.uniform(0.1, 0.9, size=(batch.endpoints.shape[0], 1))
        feat_m = rng.uniform(0.0, 1.0, size=(1, 3))
        tape = ad.Tape()
        ws = [tape.leaf(weights_np[f"gnn.w{l}"]) for l in range(2)]
        out = gcn_forward(batch, tape.leaf(batch.features, requires_grad=False),
                          tape.leaf(edge_w, requires_grad=False),
                          tape.leaf(feat_m, requires_grad=False), ws)
        oracle = _forward_numpy(batch, batch.features,
                                [weights_np["gnn.w0"], weights_np["gnn.w1"]],
                                edge_w=edge_w[:, 0], feat_mask=feat_m)
        np.testing.assert_allclose(out.value(), oracle, atol=1e-12)

    def test_propagation_affine_in_edge_weights(self):
        """Mask and complement tile the operator: P_m + P_(1-m) = P_1 + P_0."""
        g = _path_graph(5, seed=8)
        batch = batch_from_graphs(g, np.arange(5), hops=2)
        rng = np.random.default_rng(3)
        f = rng.normal(size=(batch.features.shape[0], 2))
        m = rng.uniform(0.0, 1.0, size=(batch.endpoints.shape[0], 1))
        def prop(w):
            return ad.masked_propagate(f, w, batch.plan).value()
        lhs = prop(m) + prop(1.0 - m)
        rhs = prop(np.ones_like(m)) + prop(np.zeros_like(m))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_permutation_equivariance(self):
        """Relabeling batch rows permutes the embedding rows."""
        g = _path_graph(5, seed=9)
        batch = batch_from_graphs(g, np.array([0, 3]), hops=1)
        n = batch.features.shape[0]
        rng = np.random.default_rng(4)
        weights_np = init_gcn_weights(rng, 3, 3, 2, "gnn")
        edge_w = rng.uniform(0.2, 0.8, size=(batch.endpoints.shape[0], 1))

        perm = rng.permutation(n)
        inv = np.argsort(perm)
        permuted = type(batch)(
            plan=ad.PropagationPlan.from_edges(perm[batch.endpoints], n),
            features=batch.features[inv],
            endpoints=perm[batch.endpoints],
            segments=batch.segments[inv],
            ego_rows=perm[batch.ego_rows],
            ego_labels=batch.ego_labels,
            num_graphs=batch.num_graphs,
        )

        def run(b):
            tape = ad.Tape()
            ws = [tape.leaf(weights_np[f"gnn.w{l}"], requires_grad=False)
                  for l in range(2)]
            return gcn_forward(b, tape.leaf(b.features, requires_grad=False),
                               tape.leaf(edge_w, requires_grad=False),
                               None, ws).value()

        base = run(batch)
        moved = run(permuted)
        np.testing.assert_allclose(moved[perm], base, atol=1e-12)

    def test_training_dropout_needs_rng(self):
        g = _path_graph(3, seed=10)
        batch = batch_from_graphs(g, np.arange(3), hops=1)
        tape = ad.Tape()
        ws = [tape.leaf(np.eye(3), requires_grad=False) for _ in range(2)]
        with pytest.raises(ValueError, match="rng"):
            gcn_forward(batch, tape.leaf(batch.features, requires_grad=False),
                        None, None, ws, dropout_rate=0.5, training=True)


class TestReadout:
    def test_single_node_graph_duplicates_ego(self):
        g = Graph(1, np.zeros((0, 2), int), np.array([[2.0, 1.0]]),
                  np.zeros(1, int), 1)
        batch = batch_from_graphs(g, np.array([0]), hops=1)
        emb = np.array([[3.0, -1.0]])
        proj = np.random.default_rng(5).normal(size=(4, 2))
        tape = ad.Tape()
        out = readout(batch, tape.leaf(emb, requires_grad=False),
                      tape.leaf(proj, requires_grad=False))
        expected = np.concatenate([emb[0], emb[0]])[None, :] @ proj
        np.testing.assert_allclose(out.value(), expected)

    def test_invariant_to_non_ego_order(self):
        g = _path_graph(3, seed=11)
        batch = batch_from_graphs(g, np.array([0]), hops=2)
        rng = np.random.default_rng(6)
        emb = rng.normal(size=(3, 2))
        proj = rng.normal(size=(4, 2))
        tape = ad.Tape()
        a = readout(batch, tape.leaf(emb, requires_grad=False),
                    tape.leaf(proj, requires_grad=False)).value()
        swapped = emb.copy()
        swapped[[1, 2]] = swapped[[2, 1]]  # ego row 0 untouched
        b = readout(batch, tape.leaf(swapped, requires_grad=False),
                    tape.leaf(proj, requires_grad=False)).value()
        np.testing.assert_allclose(a, b)

    def test_two_node_hand_case(self):
        g = Graph(2, np.array([[0, 1]]), np.ones((2, 2)), np.zeros(2, int), 1)
        batch = batch_from_graphs(g, np.array([0]), hops=1)
        emb = np.array([[1.0, 2.0], [3.0, 4.0]])
        proj = np.arange(8.0).reshape(4, 2)
        tape = ad.Tape()
        out = readout(batch, tape.leaf(emb, requires_grad=False),
                      tape.leaf(proj, requires_grad=False))
        concat = np.array([[1.0, 2.0, 2.0, 3.0]])  # ego then mean
        np.testing.assert_allclose(out.value(), concat @ proj)


class TestClassify:
    def test_zero_parameters_give_uniform(self):
        tape = ad.Tape()
        out = classify(tape.leaf(np.ones((2, 3)), requires_grad=False),
                       tape.leaf(np.zeros((3, 4)), requires_grad=False),
                       tape.leaf(np.zeros((1, 4)), requires_grad=False))
        np.testing.assert_allclose(out.value(), 0.25)

    def test_saturated_logit_wins(self):
        tape = ad.Tape()
        w = np.zeros((1, 3))
        b = np.array([[0.0, 40.0, 0.0]])
        out = classify(tape.leaf(np.ones((1, 1)), requires_grad=False),
                       tape.leaf(w, requires_grad=False),
                       tape.leaf(b, requires_grad=False))
        assert out.value()[0, 1] >= 1.0 - 1e-6

    def test_matches_direct_softmax(self):
        rng = np.random.default_rng(12)
        emb = rng.normal(size=(5, 4))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=(1, 3))
        tape = ad.Tape()
        out = classify(tape.leaf(emb, requires_grad=False),
                       tape.leaf(w, requires_grad=False),
                       tape.leaf(b, requires_grad=False)).value()
        logits = emb @ w + b
        ex = np.exp(logits - logits.max(axis=1, keepdims=True))
        np.testing.assert_allclose(out, ex / ex.sum(axis=1, keepdims=True),
                                   atol=1e-12)

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(13)
        tape = ad.Tape()
        out = classify(tape.leaf(rng.normal(size=(6, 3)) * 10,
                                 requires_grad=False),
                       tape.leaf(rng.normal(size=(3, 5)), requires_grad=False),
                       tape.leaf(rng.normal(size=(1, 5)), requires_grad=False))
        vals = out.value()
        assert (vals > 0).all()
        np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-9)


class TestInit:
    def test_layer_dims_chain(self):
        rng = np.random.default_rng(14)
        params = init_gcn_weights(rng, 7, 5, 3, "gnn")
        assert params["gnn.w0"].shape == (7, 5)
        assert params["gnn.w1"].shape == (5, 5)
        assert params["gnn.w2"].shape == (5, 5)

    def test_zero_layers_rejected(self):
        with pytest.raises(ValueError, match="layers"):
            init_gcn_weights(np.random.default_rng(0), 3, 4, 0, "gnn")

    def test_head_and_readout_shapes(self):
        rng = np.random.default_rng(15)
        head = init_head_params(rng, 6, 4, "head")
        assert head["head.w"].shape == (6, 4)
        assert head["head.b"].shape == (1, 4)
        ro = init_readout_params(rng, 5, "readout")
        assert ro["readout.proj"].shape == (10, 5)
