"""Directed acyclic grid graphs over which the scans run.

The 8-connected pixel grid is split into two reverse DAGs: a forward graph
whose predecessors are the four causal raster neighbors (left, upper-left,
up, upper-right) scanned in raster order, and its mirror scanned in reverse
raster order.  The union of their edge sets is the 8-connected grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

G1_OFFSETS = ((0, -1), (-1, -1), (-1, 0), (-1, 1))
G2_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))


@dataclass(frozen=True, eq=False)
class ScanGraph:
    """A grid DAG: predecessor offsets plus a topological node order.

    ``node_order`` is an (h*w, 2) array of (y, x) pairs; every edge points
    from an earlier node to a later one.  ``kind`` tags the two standard
    raster scans so they can dispatch to the compiled kernels.
    """

    h: int
    w: int
    predecessor_offsets: tuple
    node_order: np.ndarray = field(repr=False)
    kind: str = "custom"

    @property
    def num_offsets(self) -> int:
        return len(self.predecessor_offsets)

    def in_range_mask(self) -> np.ndarray:
        """(h, w, K) bool: which predecessor slots point inside the grid."""
        cached = getattr(self, "_mask_cache", None)
        if cached is not None:
            return cached
        ys, xs = np.mgrid[0 : self.h, 0 : self.w]
        mask = np.empty((self.h, self.w, self.num_offsets), dtype=bool)
        for k, (dy, dx) in enumerate(self.predecessor_offsets):
            mask[:, :, k] = (
                (ys + dy >= 0) & (ys + dy < self.h) & (xs + dx >= 0) & (xs + dx < self.w)
            )
        mask.flags.writeable = False
        object.__setattr__(self, "_mask_cache", mask)
        return mask

    def validate(self) -> None:
        """Check acyclicity: predecessors must precede their node in node_order."""
        if self.node_order.shape != (self.h * self.w, 2):
            raise ValueError(
                f"node_order has shape {self.node_order.shape}, expected {(self.h * self.w, 2)}"
            )
        rank = np.empty((self.h, self.w), dtype=np.int64)
        rank[self.node_order[:, 0], self.node_order[:, 1]] = np.arange(self.h * self.w)
        for dy, dx in self.predecessor_offsets:
            ys = np.arange(max(0, -dy), self.h - max(0, dy))
            xs = np.arange(max(0, -dx), self.w - max(0, dx))
            if ys.size == 0 or xs.size == 0:
                continue
            yy, xx = np.meshgrid(ys, xs, indexing="ij")
            if np.any(rank[yy + dy, xx + dx] >= rank[yy, xx]):
                raise ValueError(f"offset {(dy, dx)} creates an edge against node_order")

    def edges(self):
        """Yield (q, p) node pairs for every in-range edge, q the predecessor."""
        for y, x in self.node_order:
            for dy, dx in self.predecessor_offsets:
                qy, qx = y + dy, x + dx
                if 0 <= qy < self.h and 0 <= qx < self.w:
                    yield (int(qy), int(qx)), (int(y), int(x))


def _raster_order(h: int, w: int, reverse: bool) -> np.ndarray:
    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    order = np.stack([ys, xs], axis=1)
    return order[::-1].copy() if reverse else order


@lru_cache(maxsize=64)
def build_graphs(h: int, w: int):
    """The standard forward/backward scan graph pair for an h-by-w grid."""
    if h < 1 or w < 1:
        raise ValueError(f"grid extents must be positive, got {h}x{w}")
    g1 = ScanGraph(h, w, G1_OFFSETS, _raster_order(h, w, reverse=False), kind="raster")
    g2 = ScanGraph(h, w, G2_OFFSETS, _raster_order(h, w, reverse=True), kind="reverse_raster")
    return g1, g2


def column_scan_graph(h: int, w: int, offsets) -> ScanGraph:
    """A column-major DAG whose predecessors all sit in earlier columns.

    Used for the band/chain graphs of the recurrence special cases; all
    offsets must have dx < 0.
    """
    offsets = tuple((int(dy), int(dx)) for dy, dx in offsets)
    if any(dx >= 0 for _, dx in offsets):
        raise ValueError(f"column scan requires dx < 0 offsets, got {offsets}")
    xs, ys = np.divmod(np.arange(h * w, dtype=np.int64), h)
    order = np.stack([ys, xs], axis=1)
    return ScanGraph(h, w, offsets, order, kind="custom")
