"""Special-case recurrences subsumed by the generic path-sum filter.

Two known aggregation schemes reduce to scans over particular graphs: the
five-weight semi-global recurrence over a disparity band (its max-free
restriction), and affinity-based column-to-column propagation (one-way
chain and three-way band).  Both are implemented directly as recurrences
here; the test suite cross-checks them against ``forward_scan`` on the
corresponding graphs.
"""

from __future__ import annotations

import numpy as np

SGA_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))
ONE_WAY_OFFSETS = ((0, -1),)
THREE_WAY_OFFSETS = ((-1, -1), (0, -1), (1, -1))


def _oriented(cost: np.ndarray, weights: np.ndarray, direction):
    """Rotate arrays so the scan runs along the last axis, left to right."""
    dy, dx = direction
    if (dy, dx) == (0, 1):
        return cost, weights, lambda a: a
    if (dy, dx) == (0, -1):
        return cost[..., ::-1], weights[:, ::-1], lambda a: a[..., ::-1]
    if (dy, dx) == (1, 0):
        return (cost.swapaxes(-1, -2), weights.swapaxes(0, 1),
                lambda a: a.swapaxes(-1, -2))
    if (dy, dx) == (-1, 0):
        return (cost.swapaxes(-1, -2)[..., ::-1], weights.swapaxes(0, 1)[:, ::-1],
                lambda a: a[..., ::-1].swapaxes(-1, -2))
    raise ValueError(f"direction must be one of {SGA_DIRECTIONS}, got {direction}")


def sga_recurrence(cost: np.ndarray, weights: np.ndarray, direction) -> np.ndarray:
    """Five-term semi-global recurrence over a (d, h, w) cost slice.

    ``weights`` is (h, w, 5) holding [w0..w4] per pixel for this scan
    direction: self, same-d, d-1, d+1 and max-over-d terms, constrained to
    sum to one per pixel with w0 = 1 at scan-start pixels.
    """
    cost = np.asarray(cost, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if cost.ndim != 3:
        raise ValueError(f"cost must be (d, h, w), got {cost.shape}")
    if weights.shape != cost.shape[1:] + (5,):
        raise ValueError(f"weights must be {cost.shape[1:] + (5,)}, got {weights.shape}")
    sums = weights.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-9:
        raise ValueError(
            f"sga weights must sum to 1 per pixel, worst deviation {np.abs(sums - 1.0).max():.3g}"
        )
    c, wts, restore = _oriented(cost, weights, direction)
    start_w0 = wts[:, 0, 0]
    if np.abs(start_w0 - 1.0).max() > 1e-9:
        raise ValueError("scan-start pixels must have w0 = 1")

    d, h, w = c.shape
    out = np.empty((d, h, w))
    out[:, :, 0] = c[:, :, 0]
    for x in range(1, w):
        prev = out[:, :, x - 1]
        up = np.vstack([np.zeros((1, h)), prev[:-1]])      # d-1 neighbor
        down = np.vstack([prev[1:], np.zeros((1, h))])     # d+1 neighbor
        out[:, :, x] = (
            wts[:, x, 0] * c[:, :, x]
            + wts[:, x, 1] * prev
            + wts[:, x, 2] * up
            + wts[:, x, 3] * down
            + wts[:, x, 4] * prev.max(axis=0)
        )
    return np.ascontiguousarray(restore(out))


def affinity_propagation(values: np.ndarray, affinities: np.ndarray,
                         variant: str = "one-way") -> np.ndarray:
    """Column-to-column propagation with learned mixing weights.

    out(p) = (1 - sum_q a_q(p)) * values(p) + sum_q a_q(p) * out(q), scanning
    left to right; q ranges over the previous-column neighbors of the
    variant (one for "one-way", three for "three-way").  Out-of-range
    neighbors are dropped from both sums.
    """
    values = np.asarray(values, dtype=np.float64)
    affinities = np.asarray(affinities, dtype=np.float64)
    if variant == "one-way":
        offsets = ONE_WAY_OFFSETS
        if affinities.ndim == 2:
            affinities = affinities[:, :, None]
    elif variant == "three-way":
        offsets = THREE_WAY_OFFSETS
    else:
        raise ValueError(f"variant must be 'one-way' or 'three-way', got {variant!r}")
    h, w = values.shape[-2:]
    if affinities.shape != (h, w, len(offsets)):
        raise ValueError(
            f"affinities must be {(h, w, len(offsets))} for {variant}, got {affinities.shape}"
        )

    live = np.empty_like(affinities)
    for k, (dy, dx) in enumerate(offsets):
        ys = np.arange(h)
        in_y = (ys[:, None] + dy >= 0) & (ys[:, None] + dy < h)
        xs = np.arange(w)
        in_x = (xs[None, :] + dx >= 0) & (xs[None, :] + dx < w)
        live[:, :, k] = np.where(in_y & in_x, affinities[:, :, k], 0.0)
    if np.abs(live).sum(axis=2).max() > 1.0 + 1e-9:
        raise ValueError("per-pixel affinity magnitudes must sum to at most 1")

    self_w = 1.0 - live.sum(axis=2)
    out = np.empty_like(values)
    out[..., :, 0] = self_w[:, 0] * values[..., :, 0]
    # column 0 has no in-range neighbors, so self_w there is exactly 1
    for x in range(1, w):
        acc = self_w[:, x] * values[..., :, x]
        for k, (dy, _) in enumerate(offsets):
            a = live[:, x, k]
            prev = out[..., :, x - 1]
            if dy == 0:
                acc = acc + a * prev
            elif dy < 0:
                shifted = np.zeros_like(prev)
                shifted[..., -dy:] = prev[..., :dy]
                acc = acc + a * shifted
            else:
                shifted = np.zeros_like(prev)
                shifted[..., :-dy] = prev[..., dy:]
                acc = acc + a * shifted
        out[..., :, x] = acc
    return out
