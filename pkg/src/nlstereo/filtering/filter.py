"""The two-pass non-local filter and its cost-volume application.

A full filtering step scans the forward graph, then feeds the result
through the reverse graph, each pass with its own weight field derived
from the same guidance features.  The saved-state variants retain what the
hand-derived backward pass needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import ScanGraph, build_graphs
from .scan import _as_streams, backward_scan_block, scan_block
from .weights import WeightState, compute_weights, similarity_backward


@dataclass(eq=False)
class FilterSaved:
    """Intermediates of one filter_2d application (single guide).

    The value/mid/out blocks are kept in the kernels' (h, w, streams)
    layout; layout conversion happens once per layer, not per scan.
    """

    g1: ScanGraph
    g2: ScanGraph
    w1: np.ndarray
    w2: np.ndarray
    s1: WeightState
    s2: WeightState
    values: np.ndarray
    mid: np.ndarray
    out: np.ndarray
    restore: object


def filter_forward(values: np.ndarray, guide: np.ndarray):
    """filter_2d with saved state: values (h,w) or (S,h,w), guide (c,h,w)."""
    h, w = guide.shape[-2:]
    g1, g2 = build_graphs(h, w)
    w1, s1 = compute_weights(guide, g1)
    w2, s2 = compute_weights(guide, g2)
    block, restore = _as_streams(values)
    if block.shape[:2] != (h, w):
        raise ValueError(f"values grid {block.shape[:2]} does not match guide {(h, w)}")
    mid = scan_block(block, w1, g1)
    out = scan_block(mid, w2, g2)
    return restore(out), FilterSaved(g1, g2, w1, w2, s1, s2, block, mid, out, restore)


def filter_backward(upstream: np.ndarray, saved: FilterSaved):
    """Gradients of filter_forward w.r.t. (values, guide)."""
    up, _ = _as_streams(upstream)
    grad_mid, grad_w2 = backward_scan_block(up, saved.w2, saved.g2, saved.out, saved.mid)
    grad_block, grad_w1 = backward_scan_block(grad_mid, saved.w1, saved.g1,
                                              saved.mid, saved.values)
    grad_guide = similarity_backward(grad_w1, saved.s1, saved.g1)
    grad_guide += similarity_backward(grad_w2, saved.s2, saved.g2)
    return saved.restore(grad_block), grad_guide


def filter_2d(values: np.ndarray, guide: np.ndarray) -> np.ndarray:
    """Aggregate over the forward graph, then the reverse graph."""
    out, _ = filter_forward(values, guide)
    return out


def cost_filter_forward(cost: np.ndarray, guide: np.ndarray):
    """filter_2d over every (c, d) slice of an (n, c, d, h, w) volume.

    One weight-field pair is computed per sample from its guide (c_g, h, w
    per sample in ``guide``) and shared across all channel/disparity slices.
    """
    cost = np.asarray(cost, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    if cost.ndim != 5:
        raise ValueError(f"cost volume must be (n, c, d, h, w), got {cost.shape}")
    n, c, d, h, w = cost.shape
    if guide.shape[0] != n or guide.shape[-2:] != (h, w):
        raise ValueError(f"guide {guide.shape} does not match cost volume {cost.shape}")
    out = np.empty_like(cost)
    saves = []
    for i in range(n):
        streams = cost[i].reshape(c * d, h, w)
        filtered, sv = filter_forward(streams, guide[i])
        out[i] = filtered.reshape(c, d, h, w)
        saves.append(sv)
    return out, saves


def cost_filter_backward(upstream: np.ndarray, saves):
    n, c, d, h, w = upstream.shape
    grad_cost = np.empty_like(upstream)
    grad_guide = []
    for i in range(n):
        gv, gg = filter_backward(upstream[i].reshape(c * d, h, w), saves[i])
        grad_cost[i] = gv.reshape(c, d, h, w)
        grad_guide.append(gg)
    return grad_cost, np.stack(grad_guide)


def filter_cost_volume(cost: np.ndarray, guide: np.ndarray) -> np.ndarray:
    out, _ = cost_filter_forward(cost, guide)
    return out
