"""Subgraph link prediction with in-context attention over labeled example links."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    Graph,
    Model,
    NumericError,
    Split,
    effective_k,
    evaluate,
    evaluate_heuristic,
    gradcheck,
    heuristic_scores,
    hits_at_k,
    lattice,
    load_edge_list,
    pretrain,
    sbm,
    split_edges,
    verify_pattern,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "Graph",
    "Model",
    "NumericError",
    "Split",
    "effective_k",
    "evaluate",
    "evaluate_heuristic",
    "gradcheck",
    "heuristic_scores",
    "hits_at_k",
    "lattice",
    "load_edge_list",
    "pretrain",
    "sbm",
    "split_edges",
    "verify_pattern",
]
