"""Splits, training loops, run records, and experiment drivers."""

import json

import numpy as np
import pytest

from cdgnn import harness
from cdgnn.graphs import Graph, feature_heterophily, label_heterophily, save_graph
from cdgnn.harness import (
    RunConfig,
    RunRecord,
    aggregate_runs,
    dataset_hash,
    evaluate,
    ingest,
    load_model,
    multirun,
    run_experiment,
    save_model,
    save_sweep,
    split_nodes,
    sweep,
    train_cdgnn,
    train_gcn_baseline,
    write_report_csv,
)


def _tiny_graph(n=40, seed=0):
    """Ring plus chords with class-informative features; fast to train on."""
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n) for i in range(n)]
    edges += [(i, (i + n // 2) % n) for i in range(0, n, 5)]
    edges = np.unique(np.sort(np.array(edges), axis=1), axis=0)
    labels = rng.integers(0, 2, size=n)
    features = rng.normal(size=(n, 5)) * 0.1
    features[:, 0] += np.where(labels == 0, 1.0, -1.0)
    return Graph(n, edges, features, labels, 2)


def _tiny_config(**overrides):
    base = dict(learning_rate=0.01, hidden=8, dropout=0.0, layers=2,
                epochs=2, patience=2, batch_size=16, scorer_hidden=4,
                hsic_max_rows=64)
    base.update(overrides)
    base["patience"] = min(base["patience"], base["epochs"])
    return RunConfig(**base)


def _stub_record(seed, accuracy):
    return RunRecord(
        dataset="stub", dataset_hash="0" * 64, model="cdgnn", seed=seed,
        config={}, split_sizes=(6, 2, 2), label_heterophily=0.5,
        feature_heterophily=0.5, best_epoch=0, epochs_run=1,
        train_accuracy=accuracy, val_accuracy=accuracy,
        test_accuracy=accuracy, history=[], wall_time=0.0)


class TestSplitNodes:
    def test_even_ten_way_split(self):
        sp = split_nodes(10, seed=0)
        assert sp.sizes == (6, 2, 2)

    def test_floor_leaves_remainder_to_test(self):
        sp = split_nodes(7, seed=0)
        assert sp.sizes == (4, 1, 2)

    def test_parts_partition_the_nodes(self):
        sp = split_nodes(53, seed=1)
        merged = np.concatenate([sp.train, sp.val, sp.test])
        np.testing.assert_array_equal(np.sort(merged), np.arange(53))

    def test_parts_are_sorted(self):
        sp = split_nodes(31, seed=2)
        for part in (sp.train, sp.val, sp.test):
            np.testing.assert_array_equal(part, np.sort(part))

    def test_seed_determinism(self):
        a = split_nodes(20, seed=3)
        b = split_nodes(20, seed=3)
        np.testing.assert_array_equal(a.train, b.train)
        assert not np.array_equal(a.train, split_nodes(20, seed=4).train)

    def test_too_few_nodes_rejected(self):
        with pytest.raises(ValueError, match="at least 5"):
            split_nodes(4, seed=0)

    def test_fractions_must_leave_test_room(self):
        with pytest.raises(ValueError, match="room"):
            split_nodes(10, seed=0, train_fraction=0.8, val_fraction=0.2)


class TestRunConfig:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_patience_bounded_by_epochs(self):
        with pytest.raises(ValueError, match="patience"):
            RunConfig(epochs=5, patience=10).validate()

    def test_all_terms_ablated_rejected(self):
        with pytest.raises(ValueError, match="ablated"):
            _tiny_config(no_shortcut_term=True, no_causal_term=True,
                         no_counterfactual_term=True,
                         no_independence_term=True).validate()

    def test_batch_size_floor(self):
        with pytest.raises(ValueError, match="batch_size"):
            _tiny_config(batch_size=1).validate()

    def test_scorer_learning_rate_must_be_positive(self):
        with pytest.raises(ValueError, match="scorer_learning_rate"):
            _tiny_config(scorer_learning_rate=0.0).validate()

    def test_hops_default_to_depth(self):
        assert _tiny_config(layers=3).resolved_hops == 3
        assert _tiny_config(layers=3, ego_hops=1).resolved_hops == 1

    def test_loss_settings_mirror_config(self):
        cfg = _tiny_config(q=0.5, lambda_counterfactual=2.0,
                           no_independence_term=True)
        settings = cfg.loss_settings()
        assert settings.q == 0.5
        assert settings.lambda_counterfactual == 2.0
        assert settings.no_independence_term


class TestDatasetHash:
    def test_matches_manual_sha256(self):
        import hashlib
        from cdgnn.graphs import graph_to_dict
        g = _tiny_graph()
        payload = json.dumps(graph_to_dict(g), sort_keys=True)
        assert dataset_hash(g) == hashlib.sha256(payload.encode()).hexdigest()

    def test_sensitive_to_content(self):
        g = _tiny_graph()
        bumped = Graph(g.num_nodes, g.edges, g.features + 1.0, g.labels,
                       g.num_classes)
        assert dataset_hash(g) != dataset_hash(bumped)


class TestTrainCdgnn:
    def test_history_shape_and_epoch_identity(self):
        g = _tiny_graph()
        cfg = _tiny_config(lambda_counterfactual=2.0, lambda_independence=0.5)
        sp = split_nodes(g.num_nodes, seed=0)
        result = train_cdgnn(g, cfg, seed=0, train_nodes=sp.train,
                             val_nodes=sp.val)
        assert result.epochs_run == len(result.history) == 2
        for row in result.history:
            for key in ("loss_s", "loss_c", "loss_cf", "loss_hsic", "total",
                        "val_acc", "epoch", "ce_s", "ce_c"):
                assert key in row
            recomposed = (row["loss_s"] + row["loss_c"]
                          + 2.0 * row["loss_cf"] + 0.5 * row["loss_hsic"])
            assert row["total"] == recomposed

    def test_seed_reproducibility(self):
        g = _tiny_graph()
        cfg = _tiny_config()
        sp = split_nodes(g.num_nodes, seed=0)
        a = train_cdgnn(g, cfg, seed=5, train_nodes=sp.train, val_nodes=sp.val)
        b = train_cdgnn(g, cfg, seed=5, train_nodes=sp.train, val_nodes=sp.val)
        assert a.history == b.history
        for key in a.params:
            np.testing.assert_array_equal(a.params[key], b.params[key])

    def test_best_val_is_history_max(self):
        g = _tiny_graph(seed=1)
        cfg = _tiny_config(epochs=3, patience=3)
        sp = split_nodes(g.num_nodes, seed=1)
        result = train_cdgnn(g, cfg, seed=1, train_nodes=sp.train,
                             val_nodes=sp.val)
        assert result.best_val_accuracy == max(r["val_acc"]
                                               for r in result.history)
        best_row = result.history[result.best_epoch]
        assert best_row["val_acc"] == result.best_val_accuracy

    def test_ablation_flag_equals_zero_weight(self):
        """Flagging a term off and zeroing its weight take the same path."""
        g = _tiny_graph(seed=2)
        sp = split_nodes(g.num_nodes, seed=2)
        flagged = train_cdgnn(g, _tiny_config(no_counterfactual_term=True),
                              seed=3, train_nodes=sp.train, val_nodes=sp.val)
        zeroed = train_cdgnn(g, _tiny_config(lambda_counterfactual=0.0),
                             seed=3, train_nodes=sp.train, val_nodes=sp.val)
        assert flagged.history == zeroed.history
        for key in flagged.params:
            np.testing.assert_array_equal(flagged.params[key],
                                          zeroed.params[key])

    def test_needs_two_train_nodes(self):
        g = _tiny_graph()
        with pytest.raises(ValueError, match="at least 2"):
            train_cdgnn(g, _tiny_config(), seed=0,
                        train_nodes=np.array([0]), val_nodes=np.array([1]))

    def test_explicit_scorer_rate_matches_shared_rate(self):
        """Setting the scorer rate to the shared rate changes nothing."""
        g = _tiny_graph(seed=5)
        sp = split_nodes(g.num_nodes, seed=5)
        shared = train_cdgnn(g, _tiny_config(), seed=1,
                             train_nodes=sp.train, val_nodes=sp.val)
        explicit = train_cdgnn(g, _tiny_config(scorer_learning_rate=0.01),
                               seed=1, train_nodes=sp.train, val_nodes=sp.val)
        assert shared.history == explicit.history
        for key in shared.params:
            np.testing.assert_array_equal(shared.params[key],
                                          explicit.params[key])

    def test_smaller_scorer_rate_moves_scorer_less(self):
        g = _tiny_graph(seed=6)
        sp = split_nodes(g.num_nodes, seed=6)
        fast = train_cdgnn(g, _tiny_config(), seed=2,
                           train_nodes=sp.train, val_nodes=sp.val)
        slow = train_cdgnn(g, _tiny_config(scorer_learning_rate=1e-4),
                           seed=2, train_nodes=sp.train, val_nodes=sp.val)
        moved_fast = sum(np.abs(fast.params[k]).sum()
                         for k in fast.params if k.startswith("mask.w2"))
        moved_slow = sum(np.abs(slow.params[k]).sum()
                         for k in slow.params if k.startswith("mask.w2"))
        # mask.w2 starts at zero, so its magnitude tracks total movement
        assert moved_slow < moved_fast


class TestTrainBaseline:
    def test_history_and_determinism(self):
        g = _tiny_graph(seed=3)
        cfg = _tiny_config()
        sp = split_nodes(g.num_nodes, seed=3)
        a = train_gcn_baseline(g, cfg, seed=0, train_nodes=sp.train,
                               val_nodes=sp.val)
        b = train_gcn_baseline(g, cfg, seed=0, train_nodes=sp.train,
                               val_nodes=sp.val)
        assert a.history == b.history
        assert set(a.history[0]) == {"epoch", "loss", "val_acc"}
        assert {k.split(".")[0] for k in a.params} == {"gcn", "head"}

    def test_early_stopping_respects_patience(self):
        g = _tiny_graph(seed=4)
        cfg = _tiny_config(epochs=30, patience=1, learning_rate=1e-6)
        sp = split_nodes(g.num_nodes, seed=4)
        result = train_gcn_baseline(g, cfg, seed=0, train_nodes=sp.train,
                                    val_nodes=sp.val)
        if result.stopped_early:
            assert result.epochs_run < cfg.epochs
        assert result.epochs_run >= result.best_epoch + 1


class TestEvaluate:
    def test_confusion_consistent_with_accuracy(self):
        g = _tiny_graph(seed=5)
        sp = split_nodes(g.num_nodes, seed=5)
        result = train_gcn_baseline(g, _tiny_config(), seed=0,
                                    train_nodes=sp.train, val_nodes=sp.val)
        ev = evaluate(g, result.params, sp.test)
        assert ev.confusion.sum() == sp.test.shape[0]
        np.testing.assert_allclose(np.trace(ev.confusion) / ev.confusion.sum(),
                                   ev.accuracy)
        truth = g.labels[sp.test]
        np.testing.assert_allclose((ev.predictions == truth).mean(),
                                   ev.accuracy)

    def test_dispatches_on_parameter_keys(self):
        g = _tiny_graph(seed=6)
        sp = split_nodes(g.num_nodes, seed=6)
        cdgnn = train_cdgnn(g, _tiny_config(epochs=1), seed=0,
                            train_nodes=sp.train, val_nodes=sp.val)
        gcn = train_gcn_baseline(g, _tiny_config(epochs=1), seed=0,
                                 train_nodes=sp.train, val_nodes=sp.val)
        for params in (cdgnn.params, gcn.params):
            ev = evaluate(g, params, sp.test, hops=2)
            assert ev.predictions.shape == sp.test.shape

    def test_empty_nodes_rejected(self):
        g = _tiny_graph(seed=7)
        result = train_gcn_baseline(g, _tiny_config(epochs=1), seed=0,
                                    train_nodes=np.arange(10),
                                    val_nodes=np.arange(10, 14))
        with pytest.raises(ValueError, match="at least one"):
            evaluate(g, result.params, np.array([], dtype=int))


class TestTrainBatches:
    def test_trailing_singleton_merged(self):
        rng = np.random.default_rng(0)
        chunks = harness._train_batches(np.arange(7), 3, rng)
        assert sorted(len(c) for c in chunks) == [3, 4]
        np.testing.assert_array_equal(
            np.sort(np.concatenate(chunks)), np.arange(7))

    def test_exact_division_untouched(self):
        rng = np.random.default_rng(1)
        chunks = harness._train_batches(np.arange(8), 4, rng)
        assert [len(c) for c in chunks] == [4, 4]


class TestRunRecord:
    def test_canonical_form_excludes_wall_time(self):
        record = _stub_record(0, 0.9)
        assert "wall_time" not in record.canonical_dict()
        payload = json.loads(record.canonical_json())
        assert payload["test_accuracy"] == 0.9

    def test_hash_ignores_wall_time(self):
        a = _stub_record(0, 0.9)
        b = _stub_record(0, 0.9)
        b.wall_time = 123.0
        assert a.record_hash() == b.record_hash()

    def test_save_writes_named_json(self, tmp_path):
        record = _stub_record(7, 0.8)
        path = record.save(tmp_path)
        assert path.name == (f"run_cdgnn_stub_{record.record_hash()[:8]}_s7"
                             ".json")
        payload = json.loads(path.read_text())
        assert payload["wall_time"] == 0.0
        assert payload["seed"] == 7


class TestRunExperiment:
    def test_record_fields_and_param_return(self):
        g = _tiny_graph(seed=8)
        record, params = run_experiment(g, _tiny_config(epochs=1), seed=0,
                                        dataset="tiny", model="cdgnn",
                                        return_params=True)
        assert record.dataset == "tiny"
        assert record.dataset_hash == dataset_hash(g)
        assert record.split_sizes == (24, 8, 8)
        assert record.config["hidden"] == 8
        np.testing.assert_allclose(record.label_heterophily,
                                   label_heterophily(g))
        np.testing.assert_allclose(record.feature_heterophily,
                                   feature_heterophily(g))
        assert any(k.startswith("gnn_c.") for k in params)

    def test_repeat_runs_are_bitwise_identical(self):
        g = _tiny_graph(seed=9)
        cfg = _tiny_config()
        a = run_experiment(g, cfg, seed=1, dataset="tiny")
        b = run_experiment(g, cfg, seed=1, dataset="tiny")
        assert a.canonical_json() == b.canonical_json()
        assert a.record_hash() == b.record_hash()

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError, match="unknown model"):
            run_experiment(_tiny_graph(), _tiny_config(), seed=0,
                           model="mlp")


class TestAggregation:
    def test_population_std_hand_case(self):
        mean, std = aggregate_runs([0.5, 0.6, 0.7])
        np.testing.assert_allclose(mean, 0.6)
        np.testing.assert_allclose(std, 0.08164965809277258, rtol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no accuracies"):
            aggregate_runs([])


class TestMultirun:
    def test_aggregates_stubbed_runs(self, monkeypatch):
        table = {0: 0.5, 1: 0.6, 2: 0.7}
        monkeypatch.setattr(
            harness, "run_experiment",
            lambda g, cfg, seed, dataset="custom", model="cdgnn":
            _stub_record(seed, table[seed]))
        result = multirun(_tiny_graph(), _tiny_config(), seeds=[0, 1, 2])
        assert result.accuracies == [0.5, 0.6, 0.7]
        np.testing.assert_allclose(result.mean_accuracy, 0.6)
        np.testing.assert_allclose(result.std_accuracy, 0.08164965809277258)

    def test_seed_guards(self):
        g = _tiny_graph()
        with pytest.raises(ValueError, match="at least 2"):
            multirun(g, _tiny_config(), seeds=[0])
        with pytest.raises(ValueError, match="distinct"):
            multirun(g, _tiny_config(), seeds=[1, 1])


class TestAblate:
    def test_five_variants_with_flags(self, monkeypatch):
        captured = []

        def fake_run(g, cfg, seed, dataset="custom", model="cdgnn"):
            captured.append(cfg)
            return _stub_record(seed, 0.5)

        monkeypatch.setattr(harness, "run_experiment", fake_run)
        rows = harness.ablate(_tiny_graph(), _tiny_config(), seed=0)
        assert list(rows) == ["full", "no_shortcut_term", "no_causal_term",
                              "no_counterfactual_term", "no_independence_term"]
        assert not any([captured[0].no_shortcut_term,
                        captured[0].no_causal_term,
                        captured[0].no_counterfactual_term,
                        captured[0].no_independence_term])
        assert captured[1].no_shortcut_term
        assert captured[4].no_independence_term


class TestSweep:
    def test_grid_rows_and_plot_series(self, monkeypatch):
        monkeypatch.setattr(
            harness, "run_experiment",
            lambda g, cfg, seed, dataset="custom", model="cdgnn":
            _stub_record(seed, cfg.lambda_counterfactual * 0.01
                         + cfg.lambda_independence * 0.1))
        result = sweep(_tiny_graph(), _tiny_config(), [0.0, 1.0],
                       [0.1, 0.2], seeds=[0])
        assert len(result.rows) == 4
        assert result.rows[0]["num_runs"] == 1
        labels = [s["label"] for s in result.plot["series"]]
        assert labels == ["independence weight 0.1",
                          "independence weight 0.2"]
        np.testing.assert_allclose(result.plot["series"][0]["y"],
                                   [0.01, 0.02])

    def test_save_sweep_layout(self, tmp_path, monkeypatch):
        monkeypatch.setattr(
            harness, "run_experiment",
            lambda g, cfg, seed, dataset="custom", model="cdgnn":
            _stub_record(seed, 0.5))
        result = sweep(_tiny_graph(), _tiny_config(), [1.0], [0.1], seeds=[0])
        csv_path, json_path = save_sweep(result, tmp_path)
        header = csv_path.read_text().splitlines()[0]
        assert header == ("lambda_counterfactual,lambda_independence,"
                          "mean_accuracy,std_accuracy,num_runs")
        payload = json.loads(json_path.read_text())
        assert payload["series"][0]["label"] == "independence weight 0.1"


class TestReportCsv:
    def test_header_and_baseline_blanks(self, tmp_path):
        cdgnn = _stub_record(0, 0.9)
        cdgnn.history = [{"loss_s": 1.0, "loss_c": 2.0, "loss_cf": 3.0,
                          "loss_hsic": 4.0, "total": 5.0}]
        gcn = _stub_record(1, 0.8)
        gcn.model = "gcn"
        gcn.history = [{"loss": 0.3, "val_acc": 0.8, "epoch": 0.0}]
        path = write_report_csv([cdgnn, gcn], tmp_path / "report.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ("dataset,seed,h_L,h_F,split,accuracy,"
                            "loss_s,loss_c,loss_cf,loss_hsic")
        first = lines[1].split(",")
        assert first[4] == "test"
        assert first[6:] == ["1.0", "2.0", "3.0", "4.0"]
        second = lines[2].split(",")
        assert second[6:] == ["", "", "", ""]


class TestModelIo:
    def test_round_trip(self, tmp_path):
        params = {"gnn_c.w0": np.arange(6.0).reshape(2, 3),
                  "head_c.b": np.zeros((1, 4))}
        path = save_model(params, tmp_path / "model.npz")
        loaded = load_model(path)
        assert set(loaded) == set(params)
        for key in params:
            np.testing.assert_array_equal(loaded[key], params[key])

    def test_suffix_added_when_missing(self, tmp_path):
        path = save_model({"a": np.ones((1, 1))}, tmp_path / "model")
        assert path.suffix == ".npz"
        assert path.exists()


class TestIngest:
    def test_reports_heterophily(self, tmp_path):
        g = _tiny_graph(seed=10)
        path = tmp_path / "graph.json"
        save_graph(g, path)
        report = ingest(path)
        np.testing.assert_allclose(report.label_heterophily,
                                   label_heterophily(g))
        np.testing.assert_allclose(report.feature_heterophily,
                                   feature_heterophily(g))
        assert report.graph.num_nodes == g.num_nodes

    def test_invalid_file_names_problem(self, tmp_path):
        from cdgnn.graphs import GraphError
        path = tmp_path / "bad.json"
        payload = {"num_nodes": 2, "edges": [[0, 1]],
                   "features": [[1.0], [2.0]], "labels": [0, 1]}
        path.write_text(json.dumps(payload))
        with pytest.raises(GraphError, match="num_classes"):
            ingest(path)
