"""Non-local graph-based filtering: graphs, edge weights, scans, oracle."""

from .backend import BACKEND, available_backends, get_backend
from .filter import (
    cost_filter_backward,
    cost_filter_forward,
    filter_2d,
    filter_backward,
    filter_forward,
    filter_cost_volume,
)
from .graphs import G1_OFFSETS, G2_OFFSETS, ScanGraph, build_graphs, column_scan_graph
from .oracle import brute_force_path_filter, brute_force_path_weights, enumerate_paths
from .scan import backward_scan, forward_scan, validate_weight_field
from .special import affinity_propagation, sga_recurrence
from .weights import (
    compute_weights,
    near_clamp_fraction,
    normalize_incoming,
    random_weight_field,
    raw_edge_similarity,
    similarity_backward,
)

__all__ = [
    "BACKEND",
    "G1_OFFSETS",
    "G2_OFFSETS",
    "ScanGraph",
    "affinity_propagation",
    "available_backends",
    "backward_scan",
    "brute_force_path_filter",
    "brute_force_path_weights",
    "build_graphs",
    "column_scan_graph",
    "compute_weights",
    "cost_filter_backward",
    "cost_filter_forward",
    "enumerate_paths",
    "filter_2d",
    "filter_backward",
    "filter_cost_volume",
    "filter_forward",
    "forward_scan",
    "get_backend",
    "near_clamp_fraction",
    "normalize_incoming",
    "random_weight_field",
    "raw_edge_similarity",
    "sga_recurrence",
    "similarity_backward",
    "validate_weight_field",
]
