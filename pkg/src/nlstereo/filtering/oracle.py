"""Brute-force path-sum filter: the independent oracle for the scans.

Explicitly enumerates every path in the DAG.  A path from q to p starts
with the self edge at q (counted once) and follows directed edges to p;
its weight is the product of the traversed weight-field entries.  The
total path weight W(q, p) sums those products, and the filtered output is
out(p) = sum_q W(q, p) * values(q).

Exponential in grid size by construction; grids above MAX_ORACLE_NODES
nodes are rejected.
"""

from __future__ import annotations

import numpy as np

from .graphs import ScanGraph

MAX_ORACLE_NODES = 20

_path_cache: dict = {}


def _graph_key(graph: ScanGraph):
    return (graph.h, graph.w, graph.predecessor_offsets, graph.node_order.tobytes())


def enumerate_paths(graph: ScanGraph):
    """All DAG paths, grouped by length.

    Returns a list of (starts, steps) pairs, one per path length: ``starts``
    is (P,) flat start pixels, ``steps`` is (P, L, 2) with each step a
    (flat pixel, weight-field slot) pair; the first step is the self edge.
    """
    if graph.h * graph.w > MAX_ORACLE_NODES:
        raise ValueError(
            f"grid {graph.h}x{graph.w} has {graph.h * graph.w} nodes, oracle "
            f"enumeration is capped at {MAX_ORACLE_NODES}"
        )
    key = _graph_key(graph)
    if key in _path_cache:
        return _path_cache[key]

    h, w = graph.h, graph.w
    successors = {}
    for (qy, qx), (py, px) in graph.edges():
        k = graph.predecessor_offsets.index((qy - py, qx - px))
        successors.setdefault(qy * w + qx, []).append((py * w + px, 1 + k))

    by_length: dict[int, list] = {}

    def extend(start, path):
        by_length.setdefault(len(path), []).append((start, list(path)))
        node = path[-1][0]
        for nxt, slot in successors.get(node, ()):
            path.append((nxt, slot))
            extend(start, path)
            path.pop()

    for node in range(h * w):
        extend(node, [(node, 0)])

    grouped = []
    for length in sorted(by_length):
        entries = by_length[length]
        starts = np.array([s for s, _ in entries], dtype=np.int64)
        steps = np.array([p for _, p in entries], dtype=np.int64)
        grouped.append((starts, steps))
    _path_cache[key] = grouped
    return grouped


def brute_force_path_weights(weights: np.ndarray, graph: ScanGraph) -> np.ndarray:
    """W[q, p]: summed product of edge weights over every path q -> p."""
    weights = np.asarray(weights, dtype=np.float64)
    n = graph.h * graph.w
    wflat = weights.reshape(n, -1)
    total = np.zeros((n, n))
    for starts, steps in enumerate_paths(graph):
        prods = np.prod(wflat[steps[:, :, 0], steps[:, :, 1]], axis=1)
        ends = steps[:, -1, 0]
        np.add.at(total, (starts, ends), prods)
    return total


def brute_force_path_filter(values: np.ndarray, weights: np.ndarray,
                            graph: ScanGraph) -> np.ndarray:
    """Filter by explicit path enumeration; values (h, w) or (S, h, w)."""
    values = np.asarray(values, dtype=np.float64)
    wmat = brute_force_path_weights(weights, graph)
    flat = values.reshape(*values.shape[:-2], graph.h * graph.w)
    out = flat @ wmat  # out[.., p] = sum_q flat[.., q] * W[q, p]
    return out.reshape(values.shape)
