"""Command-line entry points.

Subcommands cover the full workflow: generate or relabel benchmark graphs,
train either model, evaluate saved weights, run ablations and loss-weight
sweeps, check the gain theory numerically, audit a trained model's
assumptions, and summarize saved run records as CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .gains import assumption_audit, default_grid_cells, theory_check_grid
from .graphs import label_heterophily, load_graph, save_graph
from .harness import (RunConfig, RunRecord, ablate, evaluate, ingest,
                      load_model, multirun, run_experiment, save_model,
                      save_sweep, split_nodes, sweep, write_report_csv)
from .synth import PRESET_NAMES, preset, relabel_to_heterophily

__all__ = ["main", "build_parser"]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--layers", type=int, default=d.layers)
    p.add_argument("--q", type=float, default=d.q)
    p.add_argument("--lambda1", type=float, default=d.lambda_counterfactual,
                   help="counterfactual loss weight")
    p.add_argument("--lambda2", type=float, default=d.lambda_independence,
                   help="independence (HSIC) loss weight")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--ego-hops", type=int, default=None)
    p.add_argument("--scorer-hidden", type=int, default=d.scorer_hidden)
    p.add_argument("--hsic-max-rows", type=int, default=d.hsic_max_rows)


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        hidden=args.hidden,
        dropout=args.dropout,
        layers=args.layers,
        q=args.q,
        lambda_counterfactual=args.lambda1,
        lambda_independence=args.lambda2,
        epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        ego_hops=args.ego_hops,
        scorer_hidden=args.scorer_hidden,
        hsic_max_rows=args.hsic_max_rows,
    )


def _add_graph_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", type=Path, help="graph JSON file")
    src.add_argument("--preset", choices=sorted(PRESET_NAMES),
                     help="built-in benchmark graph")


def _resolve_graph(args):
    if args.graph is not None:
        return load_graph(args.graph), args.graph.stem
    g, _ = preset(args.preset, seed=args.seed)
    return g, args.preset


def _cmd_generate(args) -> int:
    g, blocks = preset(args.preset, seed=args.seed,
                       feature_rule=args.feature_rule)
    note = ""
    if args.relabel_to is not None:
        result = relabel_to_heterophily(g, target=args.relabel_to,
                                        seed=args.seed)
        g = result.graph
        note = (f", relabeled to h_L {args.relabel_to} "
                f"({'reached' if result.reached else 'best effort'})")
    save_graph(g, args.out)
    sidecar = args.out.with_suffix(".blocks.json")
    sidecar.write_text(json.dumps({str(k): v for k, v in blocks.items()}))
    print(f"wrote {args.out} ({g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_classes} classes{note}) and {sidecar}")
    return 0


def _cmd_relabel(args) -> int:
    g = load_graph(args.graph)
    result = relabel_to_heterophily(g, target=args.target, seed=args.seed)
    save_graph(result.graph, args.out)
    achieved = label_heterophily(result.graph)
    status = "reached" if result.reached else "best effort"
    print(f"wrote {args.out}: label heterophily {achieved:.4f} "
          f"({status}) after {result.rounds} rounds")
    return 0


def _train(args, model: str) -> int:
    g, dataset = _resolve_graph(args)
    config = _config_from_args(args)
    if args.num_runs > 1:
        seeds = [args.seed + i for i in range(args.num_runs)]
        result = multirun(g, config, seeds, dataset, model)
        out_dir = Path(args.out_dir)
        for record in result.records:
            record.save(out_dir)
        print(f"{model} on {dataset}: "
              f"{result.mean_accuracy:.4f} +/- {result.std_accuracy:.4f} "
              f"over {len(seeds)} runs")
        return 0
    record, params = run_experiment(g, config, args.seed, dataset, model,
                                    return_params=True)
    out_dir = Path(args.out_dir)
    record.save(out_dir)
    model_path = save_model(params,
                            out_dir / f"model_{model}_{dataset}_s{args.seed}.npz")
    print(f"{model} on {dataset}: test accuracy {record.test_accuracy:.4f} "
          f"(best epoch {record.best_epoch}); weights at {model_path}")
    return 0


def _cmd_train(args) -> int:
    return _train(args, "cdgnn")


def _cmd_train_baseline(args) -> int:
    return _train(args, "gcn")


def _cmd_evaluate(args) -> int:
    g = load_graph(args.graph)
    params = load_model(args.model)
    if args.split == "all":
        nodes = np.arange(g.num_nodes)
    else:
        sp = split_nodes(g.num_nodes, args.seed)
        nodes = getattr(sp, args.split)
    result = evaluate(g, params, nodes, hops=args.hops)
    print(f"accuracy {result.accuracy:.4f} on {nodes.shape[0]} nodes "
          f"({args.split})")
    print("confusion (rows true, cols predicted):")
    for row in result.confusion:
        print("  " + " ".join(f"{int(v):5d}" for v in row))
    return 0


def _cmd_ablate(args) -> int:
    g, dataset = _resolve_graph(args)
    config = _config_from_args(args)
    rows = ablate(g, config, args.seed, dataset)
    out_dir = Path(args.out_dir)
    records = []
    for name, record in rows.items():
        record.save(out_dir)
        records.append(record)
        print(f"{name:24s} test accuracy {record.test_accuracy:.4f}")
    write_report_csv(records, out_dir / "ablation.csv")
    return 0


def _cmd_sweep(args) -> int:
    g, dataset = _resolve_graph(args)
    config = _config_from_args(args)
    l1 = [float(v) for v in args.lambda1_values.split(",")]
    l2 = [float(v) for v in args.lambda2_values.split(",")]
    seeds = [args.seed + i for i in range(args.num_runs)]
    result = sweep(g, config, l1, l2, seeds, dataset)
    csv_path, json_path = save_sweep(result, args.out_dir)
    best = max(result.rows, key=lambda r: r["mean_accuracy"])
    print(f"wrote {csv_path} and {json_path}")
    print(f"best cell: lambda1={best['lambda_counterfactual']} "
          f"lambda2={best['lambda_independence']} "
          f"accuracy {best['mean_accuracy']:.4f}")
    return 0


def _load_grid_cells(path: Path) -> list[dict]:
    """Grid JSON: either {"degrees": [...], "homophilies": [...],
    "ratios": [...]} (cartesian) or an explicit list of cell dicts."""
    payload = json.loads(path.read_text())
    if isinstance(payload, list):
        return payload
    return default_grid_cells(payload["degrees"], payload["homophilies"],
                              payload["ratios"])


def _cmd_theory_check(args) -> int:
    cells = (_load_grid_cells(args.grid) if args.grid is not None
             else default_grid_cells())
    grid = theory_check_grid(cells, num_samples=args.samples, seed=args.seed)
    for row in grid.rows:
        flag = "ok" if row["within"] else "OFF"
        print(f"d={row['degree']:3d} h={row['homophily']:.2f} "
              f"rho={row['cross_class_ratio']:.2f}  "
              f"analytic {row['analytic']:+.5f}  "
              f"empirical {row['empirical']:+.5f} "
              f"(stderr {row['stderr']:.2e})  {flag}")
    print(f"{grid.within_count}/{grid.total} cells within 3 standard errors")
    if args.out is not None:
        import csv as _csv

        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(grid.rows[0].keys()))
            writer.writeheader()
            writer.writerows(grid.rows)
        print(f"wrote {args.out}")
    return 0 if grid.within_count == grid.total else 1


def _cmd_audit(args) -> int:
    g = load_graph(args.graph)
    params = load_model(args.model)
    report = assumption_audit(g, params, hops=args.hops, seed=args.seed)
    print(f"branch independence (HSIC) {report.independence:.6f} "
          f"{'ok' if report.independence_ok else 'VIOLATED'}")
    print(f"counterfactual sensitivity {report.sensitivity:.6f} "
          f"{'ok' if report.sensitivity_ok else 'VIOLATED'}")
    shares = ", ".join(f"{s:.4f}" for s in report.dominance_shares)
    ratios = ", ".join(f"{r:.4f}" for r in report.cross_class_ratios)
    print(f"shortcut dominance by layer [{shares}] "
          f"{'ok' if report.dominance_ok else 'VIOLATED'}")
    print(f"cross-class ratio by layer  [{ratios}]")
    print("assumptions hold" if report.passed else "assumptions violated")
    return 0 if report.passed else 1


def _cmd_ingest(args) -> int:
    report = ingest(args.graph)
    g = report.graph
    print(f"{args.graph}: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_classes} classes, {g.feature_dim} feature dims")
    print(f"label heterophily   {report.label_heterophily:.4f}")
    print(f"feature heterophily {report.feature_heterophily:.4f}")
    return 0


def _load_record(path: Path) -> RunRecord:
    payload = json.loads(path.read_text())
    payload["split_sizes"] = tuple(payload["split_sizes"])
    return RunRecord(**payload)


def _cmd_report(args) -> int:
    paths = sorted(Path(args.records).glob("run_*.json"))
    if not paths:
        print(f"no run_*.json records under {args.records}", file=sys.stderr)
        return 1
    records = [_load_record(p) for p in paths]
    out = write_report_csv(records, args.out)
    print(f"wrote {out} ({len(records)} runs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdgnn",
        description="Disentangled GNN laboratory: data, training, theory checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a benchmark graph to JSON")
    p.add_argument("--preset", choices=sorted(PRESET_NAMES), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-rule", choices=["block_kind", "uniform_ones"],
                   default="block_kind")
    p.add_argument("--relabel-to", type=float, default=None,
                   help="relabel after generation to this label heterophily")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("relabel", help="push a graph's label heterophily up")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--target", type=float, default=None,
                   help="stop once label heterophily reaches this value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_relabel)

    for name, fn, blurb in (
            ("train", _cmd_train, "train the disentangled model"),
            ("train-baseline", _cmd_train_baseline, "train the GCN baseline")):
        p = sub.add_parser(name, help=blurb)
        _add_graph_source(p)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--num-runs", type=int, default=1)
        p.add_argument("--out-dir", type=Path, default=Path("runs"))
        _add_config_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("evaluate", help="evaluate saved weights on a split")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="weights .npz")
    p.add_argument("--split", choices=["train", "val", "test", "all"],
                   default="test")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--hops", type=int, default=2)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="single-term loss ablations")
    _add_graph_source(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("runs"))
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="grid over the two loss weights")
    _add_graph_source(p)
    p.add_argument("--lambda1-values", default="5,10,15,20")
    p.add_argument("--lambda2-values", default="0.1,0.3,0.5,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-runs", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("runs"))
    _add_config_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("theory-check",
                       help="Monte Carlo the one-layer gain formula")
    p.add_argument("--grid", type=Path, default=None,
                   help="grid JSON (axes dict or explicit cell list); "
                        "default is the built-in 27-cell grid")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="write cells CSV")
    p.set_defaults(func=_cmd_theory_check)

    p = sub.add_parser("audit", help="check analysis assumptions on weights")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="weights .npz")
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("ingest", help="validate an external graph JSON")
    p.add_argument("--graph", type=Path, required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("report", help="summarize saved run records as CSV")
    p.add_argument("--records", type=Path, required=True,
                   help="directory holding run_*.json")
    p.add_argument("--out", type=Path, default=Path("report.csv"))
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
