"""Built-in verification suite: oracle, invariant, and gradient checks.

Each check returns (ok, detail); ``run_selftest`` prints one line per check
and reports overall success.  The acceptance tests reuse these functions so
the CLI and the test suite agree on what was verified.
"""

from __future__ import annotations

import time

import numpy as np

from .data import DatasetSpec, DomainShift, apply_shift, generate_rds, stack_batch
from .filtering import (
    affinity_propagation,
    brute_force_path_filter,
    brute_force_path_weights,
    build_graphs,
    column_scan_graph,
    compute_weights,
    filter_backward,
    filter_forward,
    forward_scan,
    random_weight_field,
    sga_recurrence,
)
from .filtering.special import ONE_WAY_OFFSETS, THREE_WAY_OFFSETS
from .filtering.weights import near_clamp_fraction
from .model import (
    ModelConfig,
    backward,
    forward,
    init_model,
)
from .norm import NormMode, NormParams, dn_backward, dn_forward, norm_histogram
from .ops import Param, conv2d_backward, conv2d_forward, grad_check, smooth_l1


def check_unit_mass(fields: int = 100, max_side: int = 64, tol: float = 1e-12):
    """All-ones input must come back as all-ones for any valid weight field."""
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(fields):
        h = int(rng.integers(1, max_side + 1))
        w = int(rng.integers(1, max_side + 1))
        g1, g2 = build_graphs(h, w)
        g = (g1, g2)[i % 2]
        field = random_weight_field(g, rng)
        out = forward_scan(np.ones((h, w)), field, g)
        worst = max(worst, float(np.abs(out - 1.0).max()))
    return worst <= tol, f"{fields} fields, worst |out-1| = {worst:.3g}"


def check_oracle_equivalence(fields_per_grid: int = 50, tol: float = 1e-10,
                             wsum_tol: float = 1e-12):
    """Linear scan == explicit path enumeration; total path weight == 1."""
    rng = np.random.default_rng(12)
    worst = 0.0
    worst_wsum = 0.0
    for h in (1, 2, 3):
        for w in (1, 2, 3, 4):
            g1, g2 = build_graphs(h, w)
            for g in (g1, g2):
                for _ in range(fields_per_grid):
                    field = random_weight_field(g, rng)
                    vals = rng.standard_normal((h, w))
                    got = forward_scan(vals, field, g)
                    want = brute_force_path_filter(vals, field, g)
                    worst = max(worst, float(np.abs(got - want).max()))
                    wmat = brute_force_path_weights(field, g)
                    worst_wsum = max(worst_wsum,
                                     float(np.abs(wmat.sum(axis=0) - 1.0).max()))
    ok = worst <= tol and worst_wsum <= wsum_tol
    return ok, f"worst |scan-oracle| = {worst:.3g}, worst |sum W - 1| = {worst_wsum:.3g}"


def _grad_check_scan(seed):
    rng = np.random.default_rng(9000 + seed)
    h, w = 2, 3
    g1, g2 = build_graphs(h, w)
    g = (g1, g2)[seed % 2]
    vals = Param(rng.standard_normal((h, w)))
    field = Param(random_weight_field(g, rng))
    probe = rng.standard_normal((h, w))

    def loss():
        from .filtering import backward_scan
        agg = forward_scan(vals.value, field.value, g, check_weights=False)
        gv, gw = backward_scan(probe, field.value, g, agg, vals.value)
        vals.grad += gv
        field.grad += gw
        return float((probe * agg).sum())

    return grad_check(loss, [vals, field], rng=rng, max_coords=10)


def _grad_check_similarity(seed):
    rng = np.random.default_rng(9100 + seed)
    guide = Param(rng.standard_normal((3, 3, 4)))
    vals = rng.standard_normal((3, 4))
    probe = rng.standard_normal((3, 4))
    _, sv = filter_forward(vals, guide.value)
    if near_clamp_fraction(sv.s1) > 0 or near_clamp_fraction(sv.s2) > 0:
        return None  # excluded: raw similarity within 1e-4 of a clamp boundary

    def loss():
        out, saved = filter_forward(vals, guide.value)
        _, gg = filter_backward(probe, saved)
        guide.grad += gg
        return float((probe * out).sum())

    return grad_check(loss, guide, rng=rng, max_coords=8)


def _grad_check_norm(seed):
    rng = np.random.default_rng(9200 + seed)
    c = 3
    x = Param(rng.standard_normal((2, c, 4, 5)))
    params = NormParams(Param(rng.uniform(0.5, 1.5, c)), Param(rng.standard_normal(c)))
    kind = ("domain", "instance", "batch")[seed % 3]
    probe = rng.standard_normal(x.value.shape)

    def loss():
        mode = NormMode.batch(c) if kind == "batch" else NormMode(kind)
        y, saved = dn_forward(x.value, params, mode)
        gx, gg, gb = dn_backward(probe, saved, params)
        x.grad += gx
        params.gamma.grad += gg
        params.beta.grad += gb
        return float((probe * y).sum())

    return grad_check(loss, [x, params.gamma, params.beta], rng=rng, max_coords=6)


def _grad_check_conv(seed):
    rng = np.random.default_rng(9300 + seed)
    x = Param(rng.standard_normal((1, 2, 5, 4)))
    k = Param(rng.standard_normal((3, 2, 3, 3)))
    probe = rng.standard_normal((1, 3, 5, 4))

    def loss():
        out = conv2d_forward(x.value, k, stride=1, pad=1)
        x.grad += conv2d_backward(probe, x.value, k, stride=1, pad=1)
        return float((probe * out).sum())

    return grad_check(loss, [x, k], rng=rng, max_coords=8)


def _model_clamp_fraction(saved) -> float:
    frac = 0.0
    for layer_saves in (saved.left_saves, saved.right_saves):
        for ls in layer_saves:
            if ls.nlf_saves:
                for sv in ls.nlf_saves:
                    frac = max(frac, near_clamp_fraction(sv.s1), near_clamp_fraction(sv.s2))
    for per_layer in saved.agg_saved.nlf_saves:
        for sv in per_layer:
            frac = max(frac, near_clamp_fraction(sv.s1), near_clamp_fraction(sv.s2))
    return frac


def _model_kink_count(saved, margin: float = 1e-5) -> int:
    """Relu inputs within ``margin`` of the kink (but not exactly at it).

    Exact zeros are the cost-volume padding entries propagated through the
    bias-free 1x1 convolutions; they stay exactly zero under perturbation,
    so only near-zero nonzero values make finite differences unreliable.
    """
    count = 0
    for layer_saves in (saved.left_saves, saved.right_saves):
        for ls in layer_saves:
            z = ls.pre_relu
            count += int(((np.abs(z) < margin) & (z != 0.0)).sum())
    for z in saved.agg_saved.pre_relus:
        count += int(((np.abs(z) < margin) & (z != 0.0)).sum())
    return count


def _grad_check_model(seed):
    rng = np.random.default_rng(9400 + seed)
    config = ModelConfig(max_disparity=8, conv_widths=(6, 6), agg_width=6,
                         nlf_feature_layers=1, nlf_cost_layers=1)
    model = init_model(config, seed=seed)
    n, h, w = 2, 16, 24
    left = rng.random((n, 3, h, w))
    right = rng.random((n, 3, h, w))
    gt = rng.random((n, h, w)) * 12
    mask = rng.random((n, h, w)) > 0.2

    _, saved = forward(left, right, model, training=True)
    if _model_clamp_fraction(saved) > 0 or _model_kink_count(saved) > 0:
        return None

    params = model.parameters()

    def loss():
        disp, saved = forward(left, right, model, training=True)
        value, grad = smooth_l1(disp, gt, mask)
        backward(grad, saved, model)
        return value

    # h below the kink margin so probes cannot cross a relu boundary
    return grad_check(loss, params, h=3e-6, rng=rng, max_coords=2)


def check_backward_passes(seeds: int = 20, tol: float = 1e-4):
    """Finite-difference checks for every hand-derived backward path.

    Each check runs fresh random seeds until ``seeds`` of them are included;
    instances sitting on a clamp floor or a relu kink are excluded per the
    stated rules and replaced (they are cheap to detect, one forward pass).
    """
    checks = {
        "scan": _grad_check_scan,
        "similarity": _grad_check_similarity,
        "norm": _grad_check_norm,
        "conv": _grad_check_conv,
        "model": _grad_check_model,
    }
    details = []
    ok = True
    for name, fn in checks.items():
        errs, excluded, seed = [], 0, 0
        while len(errs) < seeds and seed < 40 * seeds:
            e = fn(seed)
            if e is None:
                excluded += 1
            else:
                errs.append(e)
            seed += 1
        worst = max(errs) if errs else float("nan")
        ok = ok and len(errs) >= seeds and worst < tol
        note = f"{name} {worst:.2e} ({len(errs)} seeds" + (
            f", {excluded} excluded)" if excluded else ")")
        details.append(note)
    return ok, "; ".join(details)


def check_norm_invariants():
    """Unit norms, per-channel affine invariance, histogram concentration."""
    rng = np.random.default_rng(13)
    c = 16
    x = 5.0 * rng.standard_normal((2, c, 24, 32))
    params = NormParams.identity(c)
    _, saved = dn_forward(x, params, NormMode.domain())
    norms = np.sqrt((saved.x_prime ** 2).sum(axis=1))
    norms_ok = norms.min() >= 1.0 - 1e-4 and norms.max() <= 1.0

    a = rng.uniform(0.5, 2.0, c)[None, :, None, None]
    b = rng.uniform(-1.0, 1.0, c)[None, :, None, None]
    _, saved2 = dn_forward(a * x + b, params, NormMode.domain())
    affine_dev = float(np.abs(saved2.x_prime - saved.x_prime).max())

    # domain-normalized features concentrate all mass at norm 1, while
    # batch-normalized features under a shifted input distribution spread
    mode_bn = NormMode.batch(c)
    dn_forward(x, params, mode_bn, training=True)
    shifted = 1.6 * x + 0.8
    y_bn, _ = dn_forward(shifted, params, mode_bn, training=False)
    _, saved_dn = dn_forward(shifted, params, NormMode.domain())

    def mass_at_one(features):
        # range wide enough to cover every norm, fine enough to resolve 1.0
        norms_max = float(np.sqrt((features ** 2).sum(axis=1)).max())
        hi = max(2.0, np.ceil(norms_max + 1.0))
        centers, counts = norm_histogram(features, bins=int(20 * hi),
                                         value_range=(0.0, hi))
        width = centers[1] - centers[0]
        at_one = np.abs(centers - 1.0) <= width / 2
        return int(counts[at_one].sum()), int(counts.sum())

    dn_at_one, dn_total = mass_at_one(saved_dn.x_prime)
    bn_at_one, bn_total = mass_at_one(y_bn)
    dn_concentrated = dn_at_one == dn_total
    bn_spread = bn_at_one < bn_total

    ok = norms_ok and affine_dev <= 1e-6 and dn_concentrated and bn_spread
    return ok, (f"norms [{norms.min():.6f}, {norms.max():.6f}], "
                f"affine dev {affine_dev:.2e}, histogram mass at 1: "
                f"{dn_at_one}/{dn_total} vs {bn_at_one}/{bn_total}")


def check_special_cases(instances: int = 20, tol: float = 1e-10):
    """The recurrence special cases coincide with scans on their graphs."""
    rng = np.random.default_rng(14)
    worst = 0.0
    d, h, w = 5, 4, 6
    band = column_scan_graph(d, w, ((0, -1), (-1, -1), (1, -1)))
    chain = column_scan_graph(h, w, ONE_WAY_OFFSETS)
    three = column_scan_graph(h, w, THREE_WAY_OFFSETS)
    for _ in range(instances):
        # max-free five-weight recurrence on one image row
        wts = rng.random((1, w, 5)) + 1e-3
        wts[0, :, 4] = 0.0
        wts[0, 0, :] = 0.0
        wts[0, 0, 0] = 1.0
        wts /= wts.sum(axis=2, keepdims=True)
        cost = rng.standard_normal((d, 1, w))
        got = sga_recurrence(cost, wts, (0, 1))[:, 0, :]
        field = np.zeros((d, w, 4))
        field[:, :, 0] = wts[0, :, 0]
        field[:, :, 1] = wts[0, :, 1]
        field[1:, :, 2] = wts[0, :, 2]
        field[:-1, :, 3] = wts[0, :, 3]
        want = forward_scan(cost[:, 0, :], field, band, check_weights=False)
        worst = max(worst, float(np.abs(got - want).max()))

        vals = rng.standard_normal((h, w))
        a1 = rng.random((h, w)) * 0.9
        got = affinity_propagation(vals, a1, "one-way")
        f1 = np.zeros((h, w, 2))
        f1[:, :, 1] = a1
        f1[:, 0, 1] = 0.0
        f1[:, :, 0] = 1.0 - f1[:, :, 1]
        want = forward_scan(vals, f1, chain)
        worst = max(worst, float(np.abs(got - want).max()))

        a3 = rng.random((h, w, 3)) * 0.3
        got = affinity_propagation(vals, a3, "three-way")
        f3 = np.zeros((h, w, 4))
        f3[:, :, 1:] = a3
        f3[:, :, 1:][~three.in_range_mask()] = 0.0
        f3[:, :, 0] = 1.0 - f3[:, :, 1:].sum(axis=2)
        want = forward_scan(vals, f3, three)
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= tol, f"{instances} instances, worst deviation {worst:.3g}"


def check_linear_complexity(min_r2: float = 0.99):
    """Scan wall time vs pixel count fits a line over 64^2 .. 512^2."""
    rng = np.random.default_rng(15)
    sides = (64, 128, 256, 512)
    ns, times = [], []
    for side in sides:
        g1, _ = build_graphs(side, side)
        field = random_weight_field(g1, rng)
        vals = rng.standard_normal((side, side))
        t0 = time.perf_counter()
        forward_scan(vals, field, g1, check_weights=False)  # warm up
        once = max(time.perf_counter() - t0, 1e-7)
        reps = max(1, int(0.3 / once))
        best = float("inf")
        for _ in range(3):
            t0 = time.perf_counter()
            for _ in range(reps):
                forward_scan(vals, field, g1, check_weights=False)
            best = min(best, (time.perf_counter() - t0) / reps)
        ns.append(side * side)
        times.append(best)
    ns = np.asarray(ns, dtype=np.float64)
    times = np.asarray(times)
    coeffs = np.polyfit(ns, times, 1)
    fit = np.polyval(coeffs, ns)
    ss_res = float(((times - fit) ** 2).sum())
    ss_tot = float(((times - times.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot
    per_px = ", ".join(f"{t / n * 1e9:.1f}" for n, t in zip(ns, times))
    return r2 > min_r2, f"R^2 = {r2:.5f}, ns/pixel = [{per_px}]"


SELFTEST_CHECKS = (
    ("unit-mass", check_unit_mass),
    ("oracle-equivalence", check_oracle_equivalence),
    ("backward-gradients", check_backward_passes),
    ("norm-invariants", check_norm_invariants),
    ("special-cases", check_special_cases),
    ("linear-complexity", check_linear_complexity),
)


def run_selftest(log=print) -> bool:
    all_ok = True
    for name, fn in SELFTEST_CHECKS:
        t0 = time.perf_counter()
        ok, detail = fn()
        dt = time.perf_counter() - t0
        log(f"[{'PASS' if ok else 'FAIL'}] {name:20s} {detail}  ({dt:.1f}s)")
        all_ok = all_ok and ok
    return all_ok
