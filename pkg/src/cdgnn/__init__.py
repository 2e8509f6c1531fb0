"""Desk-scale laboratory for causally disentangled graph learning.

Pure numpy/scipy: graph containers and heterophily measures, synthetic
benchmark generators, a small reverse-mode autodiff engine, the two-branch
disentangled classifier with its losses, closed-form propagation-gain
analysis, and a training or experiment harness with a CLI.
"""

from .graphs import (Graph, GraphError, ego_subgraph, feature_heterophily,
                     label_heterophily, load_graph, renormalized_propagate,
                     save_graph)
from .synth import (GenConfig, MotifSpec, PlantedShortcutConfig, PRESET_NAMES,
                    generate, planted_shortcut, preset, relabel_to_heterophily)
from .autodiff import Tape, Tensor, adam_step, gradients
from .models import batch_from_graphs, build_ego_cache, gcn_forward, readout
from .disentangle import (disentanglement_score, gce_loss, hsic, hsic_value,
                          total_loss)
from .gains import (AuditReport, GainParams, ImprovementReport,
                    assumption_audit, deep_layer_gain, default_grid_cells,
                    depth_decay, effective_homophily, gain_improvement_check,
                    monte_carlo_one_layer, one_layer_gain, theory_check_grid)
from .harness import (RunConfig, RunRecord, ablate, evaluate, multirun,
                      run_experiment, split_nodes, sweep, train_cdgnn,
                      train_gcn_baseline)

__version__ = "0.1.0"

__all__ = [
    "Graph", "GraphError", "ego_subgraph", "feature_heterophily",
    "label_heterophily", "load_graph", "renormalized_propagate", "save_graph",
    "GenConfig", "MotifSpec", "PlantedShortcutConfig", "PRESET_NAMES",
    "generate", "planted_shortcut", "preset", "relabel_to_heterophily",
    "Tape", "Tensor", "adam_step", "gradients",
    "batch_from_graphs", "build_ego_cache", "gcn_forward", "readout",
    "disentanglement_score", "gce_loss", "hsic", "hsic_value", "total_loss",
    "AuditReport", "GainParams", "ImprovementReport",
    "assumption_audit", "deep_layer_gain", "default_grid_cells",
    "depth_decay", "effective_homophily", "gain_improvement_check",
    "monte_carlo_one_layer", "one_layer_gain", "theory_check_grid",
    "RunConfig", "RunRecord", "ablate", "evaluate", "multirun",
    "run_experiment", "split_nodes", "sweep", "train_cdgnn",
    "train_gcn_baseline",
    "__version__",
]
