"""Training, evaluation, and experiment bookkeeping.

Two trainable models: the disentangled two-branch classifier (mask pair,
per-branch encoders and readouts, two heads on the joint embedding) and a
plain GCN baseline run on the full graph. Experiments produce RunRecords
whose canonical form excludes wall time, so identical seeds must reproduce
identical records byte for byte.

Every loss term is computed and logged on every batch regardless of
ablation flags; flags only decide what enters the optimized total. RNG
draws (batch order, dropout, counterfactual permutation, HSIC row sample)
likewise happen unconditionally, so an ablated run and a zero-weight run
follow identical trajectories.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .disentangle import (LossSettings, causal_loss, counterfactual_loss,
                          cross_entropy, difficulty_weights, gce_loss, hsic,
                          init_mask_params, materialize_masks, split_and_embed,
                          total_loss)
from .graphs import Graph, feature_heterophily, label_heterophily, load_graph
from .models import (EgoBatch, batch_from_cache, batch_from_graphs,
                     build_ego_cache, classify, gcn_forward, init_gcn_weights,
                     init_head_params, init_readout_params)

__all__ = [
    "RunConfig",
    "Split",
    "split_nodes",
    "TrainResult",
    "train_cdgnn",
    "train_gcn_baseline",
    "EvalResult",
    "evaluate",
    "RunRecord",
    "run_experiment",
    "dataset_hash",
    "aggregate_runs",
    "MultirunResult",
    "multirun",
    "ablate",
    "SweepResult",
    "sweep",
    "save_sweep",
    "IngestReport",
    "ingest",
    "write_report_csv",
    "save_model",
    "load_model",
    "full_graph_batch",
]

_EVAL_CHUNK = 256
_LOSS_KEYS = ("loss_s", "loss_c", "loss_cf", "loss_hsic", "total")


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters for one training run."""

    learning_rate: float = 1e-4
    scorer_learning_rate: float | None = None
    weight_decay: float = 5e-4
    hidden: int = 150
    dropout: float = 0.1
    layers: int = 2
    q: float = 0.7
    lambda_counterfactual: float = 10.0
    lambda_independence: float = 0.1
    epochs: int = 200
    patience: int = 30
    batch_size: int = 32
    ego_hops: int | None = None
    scorer_hidden: int = 16
    hsic_max_rows: int = 256
    no_shortcut_term: bool = False
    no_causal_term: bool = False
    no_counterfactual_term: bool = False
    no_independence_term: bool = False

    @property
    def resolved_hops(self) -> int:
        return self.layers if self.ego_hops is None else self.ego_hops

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.scorer_learning_rate is not None and self.scorer_learning_rate <= 0:
            raise ValueError(
                f"scorer_learning_rate must be positive, got {self.scorer_learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.hidden < 1 or self.layers < 1 or self.scorer_hidden < 1:
            raise ValueError("hidden, layers, and scorer_hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must be in (0, 1], got {self.q}")
        if self.lambda_counterfactual < 0 or self.lambda_independence < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.patience <= self.epochs:
            raise ValueError(
                f"patience must be in [0, epochs], got {self.patience}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.ego_hops is not None and self.ego_hops < 1:
            raise ValueError(f"ego_hops must be >= 1, got {self.ego_hops}")
        if self.hsic_max_rows < 2:
            raise ValueError(f"hsic_max_rows must be >= 2, got {self.hsic_max_rows}")
        if (self.no_shortcut_term and self.no_causal_term
                and self.no_counterfactual_term and self.no_independence_term):
            raise ValueError("all loss terms ablated; nothing to optimize")

    def loss_settings(self) -> LossSettings:
        return LossSettings(
            q=self.q,
            lambda_counterfactual=self.lambda_counterfactual,
            lambda_independence=self.lambda_independence,
            no_shortcut_term=self.no_shortcut_term,
            no_causal_term=self.no_causal_term,
            no_counterfactual_term=self.no_counterfactual_term,
            no_independence_term=self.no_independence_term,
        )


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.train.shape[0], self.val.shape[0], self.test.shape[0])


def split_nodes(num_nodes: int, seed: int, train_fraction: float = 0.6,
                val_fraction: float = 0.2) -> Split:
    """Shuffled 60/20/20 split: floored train and val, remainder test."""
    if num_nodes < 5:
        raise ValueError(f"need at least 5 nodes to split, got {num_nodes}")
    if train_fraction <= 0 or val_fraction <= 0:
        raise ValueError("split fractions must be positive")
    if train_fraction + val_fraction >= 1.0:
        raise ValueError("train and val fractions must leave room for test")
    order = np.random.default_rng(seed).permutation(num_nodes)
    n_train = int(np.floor(train_fraction * num_nodes))
    n_val = int(np.floor(val_fraction * num_nodes))
    return Split(
        train=np.sort(order[:n_train]),
        val=np.sort(order[n_train:n_train + n_val]),
        test=np.sort(order[n_train + n_val:]),
    )


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict[str, float]]
    best_epoch: int
    best_val_accuracy: float
    epochs_run: int
    stopped_early: bool


def _init_cdgnn_params(rng: np.random.Generator, feat_dim: int, hidden: int,
                       layers: int, scorer_hidden: int,
                       num_classes: int) -> dict[str, np.ndarray]:
    params = init_mask_params(rng, feat_dim, scorer_hidden)
    params.update(init_gcn_weights(rng, feat_dim, hidden, layers, "gnn_c"))
    params.update(init_gcn_weights(rng, feat_dim, hidden, layers, "gnn_s"))
    params.update(init_readout_params(rng, hidden, "readout_c"))
    params.update(init_readout_params(rng, hidden, "readout_s"))
    params.update(init_head_params(rng, 2 * hidden, num_classes, "head_c"))
    params.update(init_head_params(rng, 2 * hidden, num_classes, "head_s"))
    return params


def _branch_layers(tensors: dict[str, ad.Tensor]) -> tuple[list, list]:
    keys = sorted(k for k in tensors if k.startswith("gnn_c.w"))
    return ([tensors[k] for k in keys],
            [tensors[k.replace("gnn_c.", "gnn_s.")] for k in keys])


def _cdgnn_batch_objective(batch: EgoBatch, params: dict[str, np.ndarray],
                           config: RunConfig, rng_dropout, rng_perm, rng_hsic):
    """Forward one batch; returns (tape, tensors, total, breakdown)."""
    tape = ad.Tape()
    t = {k: tape.leaf(v) for k, v in params.items()}
    causal_layers, shortcut_layers = _branch_layers(t)
    masks = materialize_masks(batch, t)
    x = tape.leaf(batch.features, requires_grad=False)
    bundle = split_and_embed(batch, x, masks, causal_layers, shortcut_layers,
                             t["readout_c.proj"], t["readout_s.proj"],
                             config.dropout, rng_dropout, training=True)
    y = batch.ego_labels
    probs_s = classify(bundle.joint, t["head_s.w"], t["head_s.b"])
    probs_c = classify(bundle.joint, t["head_c.w"], t["head_c.b"])
    loss_s = ad.mean(gce_loss(probs_s, y, config.q))
    ce_s = cross_entropy(probs_s, y).data.reshape(-1)
    ce_c = cross_entropy(probs_c, y).data.reshape(-1)
    weights = difficulty_weights(ce_s, ce_c)
    loss_c = causal_loss(probs_c, y, weights)
    perm = rng_perm.permutation(batch.num_graphs)
    loss_cf = counterfactual_loss(bundle, (t["head_s.w"], t["head_s.b"]),
                                  (t["head_c.w"], t["head_c.b"]), y,
                                  config.q, perm, weights)
    num_rows = bundle.nodes_causal.data.shape[0]
    rows = rng_hsic.permutation(num_rows)[:config.hsic_max_rows]
    loss_hsic = hsic(ad.take_rows(bundle.nodes_causal, rows),
                     ad.take_rows(bundle.nodes_shortcut, rows))
    total, breakdown = total_loss(loss_s, loss_c, loss_cf, loss_hsic,
                                  config.loss_settings())
    breakdown["ce_s"] = float(ce_s.mean())
    breakdown["ce_c"] = float(ce_c.mean())
    return tape, t, total, breakdown


def _eval_probs_cdgnn(batch: EgoBatch, params: dict[str, np.ndarray]) -> np.ndarray:
    tape = ad.Tape()
    t = {k: tape.leaf(v, requires_grad=False) for k, v in params.items()}
    causal_layers, shortcut_layers = _branch_layers(t)
    masks = materialize_masks(batch, t)
    x = tape.leaf(batch.features, requires_grad=False)
    bundle = split_and_embed(batch, x, masks, causal_layers, shortcut_layers,
                             t["readout_c.proj"], t["readout_s.proj"])
    return classify(bundle.joint, t["head_c.w"], t["head_c.b"]).data


def _predict_cdgnn(g: Graph, cache, nodes: np.ndarray,
                   params: dict[str, np.ndarray]) -> np.ndarray:
    preds = []
    for start in range(0, nodes.shape[0], _EVAL_CHUNK):
        batch = batch_from_cache(g, cache, nodes[start:start + _EVAL_CHUNK])
        preds.append(np.argmax(_eval_probs_cdgnn(batch, params), axis=1))
    return np.concatenate(preds)


def _train_batches(train_nodes: np.ndarray, batch_size: int,
                   rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batches; a trailing singleton is merged into the previous
    batch because the counterfactual term needs at least two graphs."""
    order = rng.permutation(train_nodes)
    chunks = [order[i:i + batch_size] for i in range(0, order.shape[0], batch_size)]
    if len(chunks) > 1 and chunks[-1].shape[0] == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train_cdgnn(g: Graph, config: RunConfig, seed: int,
                train_nodes: np.ndarray, val_nodes: np.ndarray) -> TrainResult:
    """Train the disentangled model with early stopping on val accuracy."""
    config.validate()
    train_nodes = np.asarray(train_nodes, dtype=np.int64).reshape(-1)
    val_nodes = np.asarray(val_nodes, dtype=np.int64).reshape(-1)
    if train_nodes.shape[0] < 2:
        raise ValueError("need at least 2 training nodes")
    streams = np.random.SeedSequence(seed).spawn(5)
    rng_init = np.random.default_rng(streams[0])
    rng_batch = np.random.default_rng(streams[1])
    rng_dropout = np.random.default_rng(streams[2])
    rng_perm = np.random.default_rng(streams[3])
    rng_hsic = np.random.default_rng(streams[4])

    params = _init_cdgnn_params(rng_init, g.feature_dim, config.hidden,
                                config.layers, config.scorer_hidden,
                                g.num_classes)
    adam = ad.AdamState()
    # The edge scorer can take its own (usually smaller) step size: a mask
    # that commits before the branch heads have settled locks in whatever
    # split the first noisy gradients suggest. Adam is element-wise, so
    # updating the scorer keys separately is exact, not an approximation.
    adam_scorer = ad.AdamState()
    scorer_lr = config.scorer_learning_rate
    cache = build_ego_cache(g, config.resolved_hops)
    val_labels = g.labels[val_nodes]

    history: list[dict[str, float]] = []
    best_val = -1.0
    best_epoch = -1
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    stopped_early = False
    for epoch in range(config.epochs):
        sums: dict[str, float] = {}
        graphs_seen = 0
        for nodes in _train_batches(train_nodes, config.batch_size, rng_batch):
            batch = batch_from_cache(g, cache, nodes)
            tape, t, total, breakdown = _cdgnn_batch_objective(
                batch, params, config, rng_dropout, rng_perm, rng_hsic)
            for key in _LOSS_KEYS:
                if not np.isfinite(breakdown[key]):
                    raise RuntimeError(
                        f"non-finite {key} ({breakdown[key]}) at epoch {epoch}")
            grads = ad.gradients(tape, total, t)
            if scorer_lr is None:
                params, adam = ad.adam_step(params, grads, adam,
                                            config.learning_rate,
                                            config.weight_decay)
            else:
                main = {k: v for k, v in params.items()
                        if not k.startswith("mask.")}
                mask = {k: v for k, v in params.items()
                        if k.startswith("mask.")}
                main, adam = ad.adam_step(main, grads, adam,
                                          config.learning_rate,
                                          config.weight_decay)
                mask, adam_scorer = ad.adam_step(mask, grads, adam_scorer,
                                                 scorer_lr,
                                                 config.weight_decay)
                params = {**main, **mask}
            for key, value in breakdown.items():
                if key != "total":
                    sums[key] = sums.get(key, 0.0) + value * batch.num_graphs
            graphs_seen += batch.num_graphs
        row = {key: value / graphs_seen for key, value in sums.items()}
        # Epoch total is recomposed from the epoch term means so the
        # recorded identity total = s + c + l1*cf + l2*hsic holds exactly
        # (averaging per-batch totals would break it to rounding).
        coeff_s = 0.0 if config.no_shortcut_term else 1.0
        coeff_c = 0.0 if config.no_causal_term else 1.0
        eff_cf = 0.0 if config.no_counterfactual_term else config.lambda_counterfactual
        eff_ind = 0.0 if config.no_independence_term else config.lambda_independence
        row["total"] = (coeff_s * row["loss_s"] + coeff_c * row["loss_c"]
                        + eff_cf * row["loss_cf"] + eff_ind * row["loss_hsic"])
        row["epoch"] = float(epoch)
        preds = _predict_cdgnn(g, cache, val_nodes, params)
        val_acc = float((preds == val_labels).mean())
        row["val_acc"] = val_acc
        history.append(row)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if config.patience > 0 and stale >= config.patience:
                stopped_early = True
                break
    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        epochs_run=len(history),
        stopped_early=stopped_early,
    )


def full_graph_batch(g: Graph) -> EgoBatch:
    """The whole graph as a single-segment batch (baseline model input)."""
    return EgoBatch(
        plan=ad.PropagationPlan.from_edges(g.edges, g.num_nodes),
        features=g.features,
        endpoints=g.edges,
        segments=np.zeros(g.num_nodes, dtype=np.int64),
        ego_rows=np.zeros(1, dtype=np.int64),
        ego_labels=g.labels[:1],
        num_graphs=1,
    )


def _gcn_probs(batch: EgoBatch, params: dict[str, np.ndarray],
               rows: np.ndarray, dropout: float = 0.0, rng=None,
               training: bool = False, tape: ad.Tape | None = None):
    tape = tape or ad.Tape()
    t = {k: tape.leaf(v, requires_grad=training) for k, v in params.items()}
    layers = [t[k] for k in sorted(k for k in t if k.startswith("gcn.w"))]
    x = tape.leaf(batch.features, requires_grad=False)
    h = gcn_forward(batch, x, None, None, layers, dropout, rng, training)
    probs = classify(ad.take_rows(h, rows), t["head.w"], t["head.b"])
    return tape, t, probs


def train_gcn_baseline(g: Graph, config: RunConfig, seed: int,
                       train_nodes: np.ndarray,
                       val_nodes: np.ndarray) -> TrainResult:
    """Full-batch GCN trained with cross-entropy; same stopping rule."""
    config.validate()
    train_nodes = np.asarray(train_nodes, dtype=np.int64).reshape(-1)
    val_nodes = np.asarray(val_nodes, dtype=np.int64).reshape(-1)
    streams = np.random.SeedSequence(seed).spawn(5)
    rng_init = np.random.default_rng(streams[0])
    rng_dropout = np.random.default_rng(streams[2])

    params = init_gcn_weights(rng_init, g.feature_dim, config.hidden,
                              config.layers, "gcn")
    params.update(init_head_params(rng_init, config.hidden, g.num_classes,
                                   "head"))
    adam = ad.AdamState()
    batch = full_graph_batch(g)
    y_train = g.labels[train_nodes]
    val_labels = g.labels[val_nodes]

    history: list[dict[str, float]] = []
    best_val = -1.0
    best_epoch = -1
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    stopped_early = False
    for epoch in range(config.epochs):
        tape, t, probs = _gcn_probs(batch, params, train_nodes, config.dropout,
                                    rng_dropout, training=True)
        loss = ad.mean(cross_entropy(probs, y_train))
        if not np.isfinite(loss.item()):
            raise RuntimeError(f"non-finite loss ({loss.item()}) at epoch {epoch}")
        grads = ad.gradients(tape, loss, t)
        params, adam = ad.adam_step(params, grads, adam, config.learning_rate,
                                    config.weight_decay)
        _, _, val_probs = _gcn_probs(batch, params, val_nodes)
        val_acc = float((np.argmax(val_probs.data, axis=1) == val_labels).mean())
        history.append({"epoch": float(epoch), "loss": loss.item(),
                        "val_acc": val_acc})
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if config.patience > 0 and stale >= config.patience:
                stopped_early = True
                break
    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        epochs_run=len(history),
        stopped_early=stopped_early,
    )


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray


def evaluate(g: Graph, params: dict[str, np.ndarray], nodes,
             hops: int = 2) -> EvalResult:
    """Accuracy and confusion (rows true, cols predicted) on given nodes.

    Dispatches on the parameter keys: branch encoders mean the disentangled
    model (prediction via the causal head), otherwise the GCN baseline.
    Ties resolve to the lowest class id via argmax.
    """
    nodes = np.asarray(nodes, dtype=np.int64).reshape(-1)
    if nodes.shape[0] == 0:
        raise ValueError("evaluate needs at least one node")
    if any(k.startswith("gnn_c.") for k in params):
        preds = []
        for start in range(0, nodes.shape[0], _EVAL_CHUNK):
            chunk = nodes[start:start + _EVAL_CHUNK]
            batch = batch_from_graphs(g, chunk, hops)
            preds.append(np.argmax(_eval_probs_cdgnn(batch, params), axis=1))
        predictions = np.concatenate(preds)
    else:
        _, _, probs = _gcn_probs(full_graph_batch(g), params, nodes)
        predictions = np.argmax(probs.data, axis=1)
    truth = g.labels[nodes]
    confusion = np.zeros((g.num_classes, g.num_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predictions), 1)
    return EvalResult(
        accuracy=float((predictions == truth).mean()),
        confusion=confusion,
        predictions=predictions,
    )


def dataset_hash(g: Graph) -> str:
    """Content hash of the canonical graph serialization."""
    from .graphs import graph_to_dict

    payload = json.dumps(graph_to_dict(g), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class RunRecord:
    """Everything one run produced; canonical form excludes wall time."""

    dataset: str
    dataset_hash: str
    model: str
    seed: int
    config: dict
    split_sizes: tuple[int, int, int]
    label_heterophily: float
    feature_heterophily: float
    best_epoch: int
    epochs_run: int
    train_accuracy: float
    val_accuracy: float
    test_accuracy: float
    history: list[dict[str, float]]
    wall_time: float

    def canonical_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        d["split_sizes"] = list(self.split_sizes)
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True)

    def record_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = self.canonical_dict()
        payload["wall_time"] = self.wall_time
        path = out / (f"run_{self.model}_{self.dataset}_"
                      f"{self.record_hash()[:8]}_s{self.seed}.json")
        path.write_text(json.dumps(payload, indent=2))
        return path


def run_experiment(g: Graph, config: RunConfig, seed: int,
                   dataset: str = "custom", model: str = "cdgnn",
                   return_params: bool = False):
    """Split, train, evaluate on test, and assemble the record.

    With return_params=True, returns (record, trained parameter dict).
    """
    if model not in ("cdgnn", "gcn"):
        raise ValueError(f"unknown model {model!r}")
    sp = split_nodes(g.num_nodes, seed)
    start = time.perf_counter()
    if model == "cdgnn":
        result = train_cdgnn(g, config, seed, sp.train, sp.val)
    else:
        result = train_gcn_baseline(g, config, seed, sp.train, sp.val)
    train_eval = evaluate(g, result.params, sp.train, hops=config.resolved_hops)
    test = evaluate(g, result.params, sp.test, hops=config.resolved_hops)
    wall = time.perf_counter() - start
    record = RunRecord(
        dataset=dataset,
        dataset_hash=dataset_hash(g),
        model=model,
        seed=seed,
        config=asdict(config),
        split_sizes=sp.sizes,
        label_heterophily=label_heterophily(g),
        feature_heterophily=feature_heterophily(g),
        best_epoch=result.best_epoch,
        epochs_run=result.epochs_run,
        train_accuracy=train_eval.accuracy,
        val_accuracy=result.best_val_accuracy,
        test_accuracy=test.accuracy,
        history=result.history,
        wall_time=wall,
    )
    if return_params:
        return record, result.params
    return record


def aggregate_runs(accuracies: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation of run accuracies."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise ValueError("no accuracies to aggregate")
    return float(a.mean()), float(a.std(ddof=0))


@dataclass
class MultirunResult:
    records: list[RunRecord]
    accuracies: list[float]
    mean_accuracy: float
    std_accuracy: float


def multirun(g: Graph, config: RunConfig, seeds: Sequence[int],
             dataset: str = "custom", model: str = "cdgnn") -> MultirunResult:
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("multirun needs at least 2 runs")
    if len(set(seeds)) != len(seeds):
        raise ValueError("multirun seeds must be distinct")
    records = [run_experiment(g, config, s, dataset, model) for s in seeds]
    accs = [r.test_accuracy for r in records]
    mean, std = aggregate_runs(accs)
    return MultirunResult(records=records, accuracies=accs,
                          mean_accuracy=mean, std_accuracy=std)


_ABLATION_FLAGS = ("no_shortcut_term", "no_causal_term",
                   "no_counterfactual_term", "no_independence_term")


def ablate(g: Graph, config: RunConfig, seed: int,
           dataset: str = "custom") -> dict[str, RunRecord]:
    """Full objective plus each single-term ablation, same seed."""
    rows = {"full": run_experiment(g, config, seed, dataset)}
    for flag in _ABLATION_FLAGS:
        variant = replace(config, **{flag: True})
        rows[flag] = run_experiment(g, variant, seed, dataset)
    return rows


@dataclass
class SweepResult:
    rows: list[dict]
    plot: dict


def sweep(g: Graph, config: RunConfig, counterfactual_weights: Sequence[float],
          independence_weights: Sequence[float], seeds: Sequence[int],
          dataset: str = "custom") -> SweepResult:
    """Grid over the two loss weights; one plot series per independence weight."""
    seeds = list(seeds)
    rows = []
    series = []
    for l2 in independence_weights:
        means, stds = [], []
        for l1 in counterfactual_weights:
            variant = replace(config, lambda_counterfactual=l1,
                              lambda_independence=l2)
            if len(seeds) == 1:
                record = run_experiment(g, variant, seeds[0], dataset)
                mean, std = aggregate_runs([record.test_accuracy])
            else:
                result = multirun(g, variant, seeds, dataset)
                mean, std = result.mean_accuracy, result.std_accuracy
            rows.append({
                "lambda_counterfactual": l1,
                "lambda_independence": l2,
                "mean_accuracy": mean,
                "std_accuracy": std,
                "num_runs": len(seeds),
            })
            means.append(mean)
            stds.append(std)
        series.append({
            "label": f"independence weight {l2}",
            "x": list(counterfactual_weights),
            "y": means,
            "yerr": stds,
        })
    return SweepResult(rows=rows, plot={"series": series})


def save_sweep(result: SweepResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(result.rows[0].keys()))
        writer.writeheader()
        writer.writerows(result.rows)
    json_path = out / "sweep.json"
    json_path.write_text(json.dumps(result.plot, indent=2))
    return csv_path, json_path


@dataclass
class IngestReport:
    graph: Graph
    label_heterophily: float
    feature_heterophily: float


def ingest(path) -> IngestReport:
    """Load and validate an external graph file; report its heterophily."""
    g = load_graph(path)
    return IngestReport(
        graph=g,
        label_heterophily=label_heterophily(g),
        feature_heterophily=feature_heterophily(g),
    )


def write_report_csv(records: Sequence[RunRecord], path) -> Path:
    """Flat per-run summary; loss columns come from the final epoch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["dataset", "seed", "h_L", "h_F", "split", "accuracy",
              "loss_s", "loss_c", "loss_cf", "loss_hsic"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            last = r.history[-1] if r.history else {}
            writer.writerow([
                r.dataset, r.seed, r.label_heterophily, r.feature_heterophily,
                "test", r.test_accuracy,
                last.get("loss_s", ""), last.get("loss_c", ""),
                last.get("loss_cf", ""), last.get("loss_hsic", ""),
            ])
    return path


def save_model(params: dict[str, np.ndarray], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **params)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_model(path) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}
