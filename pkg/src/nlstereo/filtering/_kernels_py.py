"""Pure-Python scan kernels.

Reference implementation of the recurrences; the compiled module in
``_kernels.pyx`` mirrors these loops with the same per-element operation
order, so both backends produce bit-identical results.

All kernels take values in (h, w, streams) layout with the stream axis
contiguous, and a weight field (h, w, 1 + K) whose slot 0 is the self
weight and slots 1..K follow the graph's predecessor offsets.
"""

import numpy as np


def forward_scan_raster(values, weights, dys, dxs, reverse, out):
    """out[p] = w_self(p) * values[p] + sum_k w_k(p) * out[p + offset_k]."""
    h, w, _ = values.shape
    k_count = len(dys)
    ys = range(h - 1, -1, -1) if reverse else range(h)
    xs_fwd = list(range(w))
    xs_rev = list(range(w - 1, -1, -1))
    xs = xs_rev if reverse else xs_fwd
    for y in ys:
        for x in xs:
            acc = weights[y, x, 0] * values[y, x]
            for k in range(k_count):
                qy = y + dys[k]
                qx = x + dxs[k]
                if 0 <= qy < h and 0 <= qx < w:
                    acc = acc + weights[y, x, 1 + k] * out[qy, qx]
            out[y, x] = acc


def backward_scan_raster(upstream, weights, values, agg, dys, dxs, reverse,
                         grad_values, grad_weights, gb):
    """Adjoint of :func:`forward_scan_raster`, traversed in reverse order.

    gb[p] accumulates the total derivative w.r.t. the aggregated value at p:
    gb[p] = upstream[p] + sum over successors q of gb[q] * w(p -> q).
    """
    h, w, _ = values.shape
    k_count = len(dys)
    ys = range(h) if reverse else range(h - 1, -1, -1)
    xs = list(range(w)) if reverse else list(range(w - 1, -1, -1))
    for y in ys:
        for x in xs:
            g = upstream[y, x].copy()
            for k in range(k_count):
                sy = y - dys[k]
                sx = x - dxs[k]
                if 0 <= sy < h and 0 <= sx < w:
                    g = g + weights[sy, sx, 1 + k] * gb[sy, sx]
            gb[y, x] = g
            grad_values[y, x] = g * weights[y, x, 0]
            grad_weights[y, x, 0] = (g * values[y, x]).sum()
            for k in range(k_count):
                qy = y + dys[k]
                qx = x + dxs[k]
                if 0 <= qy < h and 0 <= qx < w:
                    grad_weights[y, x, 1 + k] = (g * agg[qy, qx]).sum()


def forward_scan_generic(values, weights, offsets, node_order, out):
    """Raster-free variant for custom DAGs: visits nodes in node_order."""
    h, w, _ = values.shape
    for y, x in node_order.tolist():
        acc = weights[y, x, 0] * values[y, x]
        for k, (dy, dx) in enumerate(offsets):
            qy = y + dy
            qx = x + dx
            if 0 <= qy < h and 0 <= qx < w:
                acc = acc + weights[y, x, 1 + k] * out[qy, qx]
        out[y, x] = acc


def backward_scan_generic(upstream, weights, values, agg, offsets, node_order,
                          grad_values, grad_weights, gb):
    h, w, _ = values.shape
    for y, x in node_order[::-1].tolist():
        g = upstream[y, x].copy()
        for k, (dy, dx) in enumerate(offsets):
            sy = y - dy
            sx = x - dx
            if 0 <= sy < h and 0 <= sx < w:
                g = g + weights[sy, sx, 1 + k] * gb[sy, sx]
        gb[y, x] = g
        grad_values[y, x] = g * weights[y, x, 0]
        grad_weights[y, x, 0] = (g * values[y, x]).sum()
        for k, (dy, dx) in enumerate(offsets):
            qy = y + dy
            qx = x + dx
            if 0 <= qy < h and 0 <= qx < w:
                grad_weights[y, x, 1 + k] = (g * agg[qy, qx]).sum()
