"""Counterfactual evaluation of treatment assignment functions on
networked observational data with hidden confounders."""

from .cone import (ConeConfig, ConeParams, PartialReps, estimate_mi,
                   gat_partial_rep, infer_utility, train)
from .datagen import GenConfig, NetworkedDataset, make_dataset
from .estimators import (EstimateRecord, OracleOutcome, OraclePropensity,
                         direct_estimate, dr_estimate, fit_outcome,
                         fit_propensity, ips_estimate, rmse_mae,
                         snips_estimate)
from .graph import Graph, add_self_loops, build_graph, neighbors
from .policy import Policy, policy_probs, sample_policy, true_utility

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Graph", "build_graph", "neighbors", "add_self_loops",
    "GenConfig", "NetworkedDataset", "make_dataset",
    "Policy", "sample_policy", "policy_probs", "true_utility",
    "EstimateRecord", "OracleOutcome", "OraclePropensity",
    "fit_propensity", "fit_outcome", "direct_estimate", "ips_estimate",
    "snips_estimate", "dr_estimate", "rmse_mae",
    "ConeConfig", "ConeParams", "PartialReps", "train", "infer_utility",
    "gat_partial_rep", "estimate_mi",
]
