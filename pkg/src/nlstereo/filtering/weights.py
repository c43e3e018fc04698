"""Self-regularized edge weights from guidance features.

Each directed edge (q -> p) gets the cosine similarity of the guidance
feature vectors at p and q; the self edge gets 1.  Per pixel, the raw
values are clamped to [W_FLOOR, 1] and divided by their sum, yielding a
convex combination: self weight plus in-range predecessor weights sum to
exactly one.  No trainable parameters are introduced; gradients flow back
into the guidance features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import ScanGraph

W_FLOOR = 1e-6       # lower clamp on raw similarities, keeps weights positive
NORM_FLOOR = 1e-12   # floor on feature norms inside the cosine


@dataclass(frozen=True, eq=False)
class WeightState:
    """Intermediates of the raw -> clamped -> normalized chain, kept for backward."""

    raw: np.ndarray        # (h, w, K) cosines, 0 on out-of-range slots
    clamped: np.ndarray    # (h, w, K) after clamping, 0 on out-of-range slots
    total: np.ndarray      # (h, w) 1 + sum of clamped in-range values
    in_range: np.ndarray   # (h, w, K) bool
    unit: np.ndarray       # (c, h, w) guide / max(norm, NORM_FLOOR)
    norm: np.ndarray       # (h, w) guide feature norms (unfloored)


def _check_guide(guide: np.ndarray) -> np.ndarray:
    guide = np.asarray(guide, dtype=np.float64)
    if guide.ndim != 3:
        raise ValueError(f"guide must be (c, h, w), got shape {guide.shape}")
    return guide


def raw_edge_similarity(guide: np.ndarray, graph: ScanGraph) -> np.ndarray:
    """Cosine of guidance vectors across every in-range edge; (h, w, K)."""
    return _similarity_state(guide, graph)[0]


def _similarity_state(guide: np.ndarray, graph: ScanGraph):
    guide = _check_guide(guide)
    c, h, w = guide.shape
    if (h, w) != (graph.h, graph.w):
        raise ValueError(f"guide grid {(h, w)} does not match graph {(graph.h, graph.w)}")
    norm = np.sqrt((guide * guide).sum(axis=0))
    unit = guide / np.maximum(norm, NORM_FLOOR)
    raw = np.zeros((h, w, graph.num_offsets))
    for k, (dy, dx) in enumerate(graph.predecessor_offsets):
        py0, py1 = max(0, -dy), h - max(0, dy)
        px0, px1 = max(0, -dx), w - max(0, dx)
        if py0 >= py1 or px0 >= px1:
            continue
        up = unit[:, py0:py1, px0:px1]
        uq = unit[:, py0 + dy : py1 + dy, px0 + dx : px1 + dx]
        raw[py0:py1, px0:px1, k] = (up * uq).sum(axis=0)
    return raw, unit, norm


def normalize_incoming(raw: np.ndarray, graph: ScanGraph, w_floor: float = W_FLOOR):
    """Clamp raw similarities to [w_floor, 1] and divide by the per-pixel sum."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("raw similarities contain non-finite values")
    in_range = graph.in_range_mask()
    clamped = np.clip(raw, w_floor, 1.0)
    clamped[~in_range] = 0.0
    total = 1.0 + clamped.sum(axis=2)
    weights = np.empty((graph.h, graph.w, 1 + graph.num_offsets))
    weights[:, :, 0] = 1.0 / total
    weights[:, :, 1:] = clamped / total[:, :, None]
    return weights, clamped, total, in_range


def compute_weights(guide: np.ndarray, graph: ScanGraph, w_floor: float = W_FLOOR):
    """Full guide -> EdgeWeightField chain; returns (weights, state for backward)."""
    raw, unit, norm = _similarity_state(guide, graph)
    weights, clamped, total, in_range = normalize_incoming(raw, graph, w_floor)
    state = WeightState(raw=raw, clamped=clamped, total=total, in_range=in_range,
                        unit=unit, norm=norm)
    return weights, state


def similarity_backward(grad_weights: np.ndarray, state: WeightState,
                        graph: ScanGraph, w_floor: float = W_FLOOR) -> np.ndarray:
    """Chain weight-field gradients back to the guidance features.

    The divide-by-sum is differentiated exactly; the clamp acts as a
    stop-gradient gate (zero outside the open interval (w_floor, 1)).
    Returns (c, h, w) gradients matching the guide.
    """
    grad_weights = np.asarray(grad_weights, dtype=np.float64)
    total = state.total
    # w_i = c_i / T with c_0 = 1 fixed: dE/dc_k = (g_k - sum_j g_j w_j) / T
    s = (grad_weights[:, :, 0]
         + (grad_weights[:, :, 1:] * state.clamped).sum(axis=2)) / total
    grad_clamped = (grad_weights[:, :, 1:] - s[:, :, None]) / total[:, :, None]
    gate = state.in_range & (state.raw > w_floor) & (state.raw < 1.0)
    grad_raw = np.where(gate, grad_clamped, 0.0)

    # cosine backward: cos = <u_p, u_q> with u = x / max(||x||, floor);
    # d cos / d x_p = (u_q - cos * u_p) / N_p, the u_p term dropped when the
    # norm sits below the floor (the floored norm is locally constant).
    unit = state.unit
    norm_eff = np.maximum(state.norm, NORM_FLOOR)
    live = state.norm > NORM_FLOOR
    grad_guide = np.zeros_like(unit)
    h, w = graph.h, graph.w
    for k, (dy, dx) in enumerate(graph.predecessor_offsets):
        py0, py1 = max(0, -dy), h - max(0, dy)
        px0, px1 = max(0, -dx), w - max(0, dx)
        if py0 >= py1 or px0 >= px1:
            continue
        psel = (slice(py0, py1), slice(px0, px1))
        qsel = (slice(py0 + dy, py1 + dy), slice(px0 + dx, px1 + dx))
        g = grad_raw[psel[0], psel[1], k]
        cos = state.raw[psel[0], psel[1], k]
        up = unit[:, psel[0], psel[1]]
        uq = unit[:, qsel[0], qsel[1]]
        dp = (uq - cos * up * live[psel]) / norm_eff[psel]
        dq = (up - cos * uq * live[qsel]) / norm_eff[qsel]
        grad_guide[:, psel[0], psel[1]] += g * dp
        grad_guide[:, qsel[0], qsel[1]] += g * dq
    return grad_guide


def random_weight_field(graph: ScanGraph, rng) -> np.ndarray:
    """A random valid weight field: positive slots normalized per pixel.

    Used by the self checks and benchmarks to exercise the scans with
    weights not tied to any guide.
    """
    field = rng.random((graph.h, graph.w, 1 + graph.num_offsets)) + 1e-3
    field[:, :, 1:][~graph.in_range_mask()] = 0.0
    return field / field.sum(axis=2, keepdims=True)


def near_clamp_fraction(state: WeightState, margin: float = 1e-4) -> float:
    """Fraction of in-range raw values within ``margin`` of the clamp floor.

    Finite-difference checks exclude instances where this is nonzero, since
    the stop-gradient gate is only a subgradient choice there.  Two cases
    near a boundary are benign and not counted: exactly-zero cosines come
    from disjoint relu supports and stay exactly zero under small
    perturbations, and the upper boundary is the cosine's own smooth
    maximum, where the gate and the true (vanishing) derivative agree.
    """
    raw = state.raw[state.in_range]
    if raw.size == 0:
        return 0.0
    near = (np.abs(raw - W_FLOOR) < margin) & (raw != 0.0)
    return float(near.mean())
