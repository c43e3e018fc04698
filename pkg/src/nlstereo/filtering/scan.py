"""Linear-time forward and backward scans over the grid DAGs.

``forward_scan`` realizes the path-sum filter as an iterative aggregation:
visiting nodes in topological order,

    out(p) = w_self(p) * values(p) + sum_k w_k(p) * out(pred_k(p)).

With the weight field a per-pixel convex combination (self + in-range
predecessors summing to one) this equals the explicit sum over all DAG
paths of products of edge weights, which ``oracle.brute_force_path_filter``
enumerates directly.

``backward_scan`` runs the adjoint recurrence in reverse topological order
and returns gradients for both the input values and the weight field.
"""

from __future__ import annotations

import numpy as np

from . import _kernels_py
from .backend import get_backend
from .graphs import ScanGraph

WEIGHT_SUM_TOL = 1e-6


def _as_streams(values: np.ndarray):
    """View (h, w) or (S, h, w) input as a contiguous (h, w, S) block."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        block = np.ascontiguousarray(values[:, :, None])
        return block, lambda a: a[:, :, 0]
    if values.ndim == 3:
        block = np.ascontiguousarray(np.moveaxis(values, 0, 2))
        return block, lambda a: np.ascontiguousarray(np.moveaxis(a, 2, 0))
    raise ValueError(f"expected (h, w) or (streams, h, w) values, got shape {values.shape}")


def validate_weight_field(weights: np.ndarray, graph: ScanGraph, tol: float = WEIGHT_SUM_TOL):
    """Reject weight fields that are not per-pixel convex combinations."""
    weights = np.asarray(weights, dtype=np.float64)
    want = (graph.h, graph.w, 1 + graph.num_offsets)
    if weights.shape != want:
        raise ValueError(f"weight field shape {weights.shape}, expected {want}")
    if weights.min() < -1e-12:
        raise ValueError(f"negative edge weight {weights.min()}")
    out_of_range = ~graph.in_range_mask()
    if np.any(weights[:, :, 1:][out_of_range] != 0.0):
        raise ValueError("nonzero weight on an out-of-range predecessor slot")
    sums = weights.sum(axis=2)
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise ValueError(f"incoming weights must sum to 1, worst deviation {worst:.3g}")
    return weights


def _offset_arrays(graph: ScanGraph):
    dys = np.ascontiguousarray([dy for dy, _ in graph.predecessor_offsets], dtype=np.int64)
    dxs = np.ascontiguousarray([dx for _, dx in graph.predecessor_offsets], dtype=np.int64)
    return dys, dxs


def scan_block(block: np.ndarray, weights: np.ndarray, graph: ScanGraph) -> np.ndarray:
    """Forward scan on an already (h, w, streams)-contiguous block."""
    out = np.empty_like(block)
    if graph.kind in ("raster", "reverse_raster"):
        dys, dxs = _offset_arrays(graph)
        get_backend().forward_scan_raster(
            block, weights, dys, dxs, graph.kind == "reverse_raster", out)
    else:
        _kernels_py.forward_scan_generic(block, weights, graph.predecessor_offsets,
                                         graph.node_order, out)
    return out


def backward_scan_block(up: np.ndarray, weights: np.ndarray, graph: ScanGraph,
                        agg: np.ndarray, vals: np.ndarray):
    """Adjoint scan on (h, w, streams) blocks; returns (grad_block, grad_weights)."""
    grad_values = np.empty_like(vals)
    grad_weights = np.zeros_like(weights)
    gb = np.empty_like(vals)
    if graph.kind in ("raster", "reverse_raster"):
        dys, dxs = _offset_arrays(graph)
        get_backend().backward_scan_raster(up, weights, vals, agg, dys, dxs,
                                           graph.kind == "reverse_raster",
                                           grad_values, grad_weights, gb)
    else:
        _kernels_py.backward_scan_generic(up, weights, vals, agg,
                                          graph.predecessor_offsets, graph.node_order,
                                          grad_values, grad_weights, gb)
    return grad_values, grad_weights


def forward_scan(values: np.ndarray, weights: np.ndarray, graph: ScanGraph,
                 check_weights: bool = True) -> np.ndarray:
    """Aggregate values over the graph; linear in the number of pixels."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if check_weights:
        validate_weight_field(weights, graph)
    block, restore = _as_streams(values)
    if block.shape[:2] != (graph.h, graph.w):
        raise ValueError(f"values grid {block.shape[:2]} does not match graph {(graph.h, graph.w)}")
    return restore(scan_block(block, weights, graph))


def backward_scan(upstream: np.ndarray, weights: np.ndarray, graph: ScanGraph,
                  saved_agg: np.ndarray, saved_values: np.ndarray):
    """Adjoint of :func:`forward_scan`.

    Returns (grad_values, grad_weights); grad_weights has the same
    (h, w, 1 + K) layout as the weight field, summed over streams.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    up, restore = _as_streams(upstream)
    agg, _ = _as_streams(saved_agg)
    vals, _ = _as_streams(saved_values)
    if not (up.shape == agg.shape == vals.shape):
        raise ValueError(
            f"backward_scan shape mismatch: upstream {up.shape}, agg {agg.shape}, values {vals.shape}"
        )
    grad_values, grad_weights = backward_scan_block(up, weights, graph, agg, vals)
    return restore(grad_values), grad_weights
