"""Geometry of supervised contrastive loss under the unconstrained-features model."""

__version__ = "0.1.0"

from .batching import (BatchSet, ConditionReport, InteractionGraph, all_permutation_batches,
                       batch_binding, build_graph, check_batches, check_cor_conditions,
                       make_partition)
from .geometry import (LabelSet, center_columns, class_means, make_etf, make_of,
                       project_feasible)
from .kernels import BACKEND
from .loss import (LossConfig, LossReport, batch_lower_bound, full_lower_bound,
                   scl_batch_gradient, scl_batch_loss, scl_full_gradient, scl_full_loss)
from .metrics import (GeometryReport, beta_nc, delta_etf, delta_gm, geometry_report,
                      heatmap_payload, mean_pairwise_cosine)
from .solver import SolverConfig, Trajectory, multi_start, solve

__all__ = [
    "BACKEND", "BatchSet", "ConditionReport", "GeometryReport", "InteractionGraph", "LabelSet",
    "LossConfig", "LossReport", "SolverConfig", "Trajectory", "all_permutation_batches",
    "batch_binding", "batch_lower_bound", "beta_nc", "build_graph", "center_columns",
    "check_batches", "check_cor_conditions", "class_means", "delta_etf", "delta_gm",
    "full_lower_bound", "geometry_report", "heatmap_payload", "make_etf", "make_of",
    "make_partition", "mean_pairwise_cosine", "multi_start", "project_feasible",
    "scl_batch_gradient", "scl_batch_loss", "scl_full_gradient", "scl_full_loss", "solve",
]
