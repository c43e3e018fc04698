#!/usr/bin/env python3
"""Compare the compiled and pure-Python scan kernels.

Times the forward and backward scans over a range of grid sizes and stream
counts and prints a table with the speedup.  Also reports per-pixel cost to
make the linear scaling visible.

Run:  python3 benchmarks/bench_backends.py [--sizes 64,128,256] [--streams 1,16]
"""

import argparse
import time

import numpy as np

from nlstereo.filtering import available_backends, build_graphs, random_weight_field
from nlstereo.filtering.backend import get_backend


def _offset_arrays(graph):
    dys = np.array([dy for dy, _ in graph.predecessor_offsets], dtype=np.int64)
    dxs = np.array([dx for _, dx in graph.predecessor_offsets], dtype=np.int64)
    return dys, dxs


def _best_of(fn, budget: float = 0.25) -> float:
    """Best-of-3 timing with repetition count calibrated to the budget."""
    t0 = time.perf_counter()
    fn()
    once = max(time.perf_counter() - t0, 1e-7)
    reps = max(1, int(budget / once))
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best


def time_backend(kern, graph, field, vals):
    dys, dxs = _offset_arrays(graph)
    out = np.empty_like(vals)
    kern.forward_scan_raster(vals, field, dys, dxs, False, out)  # warm up
    best_f = _best_of(
        lambda: kern.forward_scan_raster(vals, field, dys, dxs, False, out))
    up = np.ones_like(vals)
    gv = np.empty_like(vals)
    gw = np.zeros_like(field)
    gb = np.empty_like(vals)
    best_b = _best_of(
        lambda: kern.backward_scan_raster(up, field, vals, out, dys, dxs, False,
                                          gv, gw, gb))
    return best_f, best_b


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="64,128,256,512")
    ap.add_argument("--streams", default="1,16")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    streams = [int(s) for s in args.streams.split(",")]

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled backend missing; run pip install -e . first")

    rng = np.random.default_rng(0)
    header = f"{'grid':>9} {'S':>4} | " + " | ".join(
        f"{b + ' fwd':>12} {b + ' bwd':>12}" for b in backends)
    if len(backends) == 2:
        header += " |  fwd speedup"
    print(header)
    print("-" * len(header))
    for side in sizes:
        g1, _ = build_graphs(side, side)
        field = random_weight_field(g1, rng)
        for s in streams:
            vals = np.ascontiguousarray(rng.standard_normal((side, side, s)))
            row = f"{side}x{side:<4} {s:>4} | "
            times = {}
            for b in backends:
                tf, tb = time_backend(get_backend(b), g1, field, vals)
                times[b] = (tf, tb)
                row += f"{tf * 1e3:>10.2f}ms {tb * 1e3:>10.2f}ms | "
            if len(backends) == 2:
                row += f"{times['python'][0] / times['compiled'][0]:>10.1f}x"
            print(row)
    print("\nper-pixel forward cost (compiled, S=1):")
    if "compiled" in backends:
        for side in sizes:
            g1, _ = build_graphs(side, side)
            field = random_weight_field(g1, rng)
            vals = np.ascontiguousarray(rng.standard_normal((side, side, 1)))
            tf, _ = time_backend(get_backend("compiled"), g1, field, vals)
            print(f"  {side}x{side}: {tf / side / side * 1e9:.2f} ns/pixel")


if __name__ == "__main__":
    main()
