import numpy as np
import pytest

from nlstereo.filtering import (
    affinity_propagation,
    column_scan_graph,
    forward_scan,
    sga_recurrence,
)
from nlstereo.filtering.special import (
    ONE_WAY_OFFSETS,
    SGA_DIRECTIONS,
    THREE_WAY_OFFSETS,
)


def random_sga_weights(rng, h, w, zero_max_term=False):
    """Random five-weight field: valid sums, w0=1 at scan start (x=0)."""
    wts = rng.random((h, w, 5)) + 1e-3
    if zero_max_term:
        wts[:, :, 4] = 0.0
    wts[:, 0, :] = 0.0
    wts[:, 0, 0] = 1.0
    return wts / wts.sum(axis=2, keepdims=True)


def band_graph(d, w):
    """The max-free scan graph: chain along x with a d-1/d/d+1 band."""
    return column_scan_graph(d, w, ((0, -1), (-1, -1), (1, -1)))


def lift_to_band_field(wts_row, d):
    """Spread one image row's (w, 5) direction weights over the (d, w) band grid.

    Keeps the recurrence semantics exactly: out-of-range disparity
    neighbors at the band edges contribute zero, with no renormalization,
    so the lifted field is not unit-mass there.
    """
    w = wts_row.shape[0]
    field = np.zeros((d, w, 4))
    field[:, :, 0] = wts_row[:, 0]
    field[:, :, 1] = wts_row[:, 1]
    field[1:, :, 2] = wts_row[:, 2]
    field[:-1, :, 3] = wts_row[:, 3]
    return field


class TestSgaRecurrence:
    def test_self_weight_one_is_identity(self):
        rng = np.random.default_rng(0)
        cost = rng.standard_normal((4, 3, 5))
        wts = np.zeros((3, 5, 5))
        wts[:, :, 0] = 1.0
        for direction in SGA_DIRECTIONS:
            out = sga_recurrence(cost, wts, direction)
            np.testing.assert_array_equal(out, cost)

    def test_copy_recurrence_propagates_scan_start(self):
        rng = np.random.default_rng(1)
        cost = rng.standard_normal((3, 4, 6))
        wts = np.zeros((4, 6, 5))
        wts[:, :, 1] = 1.0
        wts[:, 0, :] = 0.0
        wts[:, 0, 0] = 1.0
        out = sga_recurrence(cost, wts, (0, 1))
        for x in range(6):
            np.testing.assert_allclose(out[:, :, x], cost[:, :, 0], atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_max_free_case_equals_forward_scan(self, seed):
        rng = np.random.default_rng(10 + seed)
        d, w = 5, 7
        wts = random_sga_weights(rng, 1, w, zero_max_term=True)
        cost = rng.standard_normal((d, 1, w))
        got = sga_recurrence(cost, wts, (0, 1))
        field = lift_to_band_field(wts[0], d)
        want = forward_scan(cost[:, 0, :], field, band_graph(d, w), check_weights=False)
        np.testing.assert_allclose(got[:, 0, :], want, atol=1e-10)

    @pytest.mark.parametrize("direction", SGA_DIRECTIONS)
    def test_matches_naive_loop_in_all_directions(self, direction):
        rng = np.random.default_rng(2)
        d, h, w = 3, 4, 5
        cost = rng.standard_normal((d, h, w))
        wts = sga_weights_for_direction(rng, h, w, direction)
        got = sga_recurrence(cost, wts, direction)
        want = naive_sga(cost, wts, direction)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_bad_sum_rejected(self):
        cost = np.zeros((2, 2, 3))
        wts = np.full((2, 3, 5), 0.3)
        with pytest.raises(ValueError, match="sum to 1"):
            sga_recurrence(cost, wts, (0, 1))

    def test_bad_start_rejected(self):
        cost = np.zeros((2, 2, 3))
        wts = np.zeros((2, 3, 5))
        wts[:, :, 1] = 1.0
        with pytest.raises(ValueError, match="scan-start"):
            sga_recurrence(cost, wts, (0, 1))

    def test_max_term_used(self):
        # w4 routes the previous column's maximum forward
        cost = np.zeros((3, 1, 2))
        cost[:, 0, 0] = [1.0, 5.0, 2.0]
        wts = np.zeros((1, 2, 5))
        wts[0, 0, 0] = 1.0
        wts[0, 1, 4] = 1.0
        out = sga_recurrence(cost, wts, (0, 1))
        np.testing.assert_allclose(out[:, 0, 1], 5.0, atol=1e-15)


def sga_weights_for_direction(rng, h, w, direction):
    """Random five-weight field with w0=1 on the scan-start edge of ``direction``."""
    wts = rng.random((h, w, 5)) + 1e-3
    dy, dx = direction
    start = {
        (0, 1): (slice(None), 0),
        (0, -1): (slice(None), w - 1),
        (1, 0): (0, slice(None)),
        (-1, 0): (h - 1, slice(None)),
    }[(dy, dx)]
    wts[start] = 0.0
    wts[start[0], start[1], 0] = 1.0
    return wts / wts.sum(axis=2, keepdims=True)


def naive_sga(cost, wts, direction):
    """Per-pixel loop reference for the five-term recurrence."""
    d, h, w = cost.shape
    dy, dx = direction
    out = np.zeros_like(cost)
    ys = range(h) if dy >= 0 else range(h - 1, -1, -1)
    xs = range(w) if dx >= 0 else range(w - 1, -1, -1)
    for y in ys:
        for x in xs:
            py, px = y - dy, x - dx
            if not (0 <= py < h and 0 <= px < w):
                out[:, y, x] = cost[:, y, x]  # w0 is 1 here by precondition
                continue
            prev = out[:, py, px]
            mx = prev.max()
            for dd in range(d):
                acc = wts[y, x, 0] * cost[dd, y, x] + wts[y, x, 1] * prev[dd]
                if dd > 0:
                    acc += wts[y, x, 2] * prev[dd - 1]
                if dd < d - 1:
                    acc += wts[y, x, 3] * prev[dd + 1]
                out[dd, y, x] = acc + wts[y, x, 4] * mx
    return out


class TestAffinityPropagation:
    def test_zero_affinity_is_identity(self):
        rng = np.random.default_rng(2)
        vals = rng.standard_normal((4, 6))
        out = affinity_propagation(vals, np.zeros((4, 6)), "one-way")
        np.testing.assert_array_equal(out, vals)
        out3 = affinity_propagation(vals, np.zeros((4, 6, 3)), "three-way")
        np.testing.assert_array_equal(out3, vals)

    @pytest.mark.parametrize("seed", range(5))
    def test_one_way_equals_chain_scan(self, seed):
        rng = np.random.default_rng(20 + seed)
        h, w = 4, 6
        a = rng.random((h, w)) * 0.9
        vals = rng.standard_normal((h, w))
        got = affinity_propagation(vals, a, "one-way")
        g = column_scan_graph(h, w, ONE_WAY_OFFSETS)
        field = np.zeros((h, w, 2))
        field[:, :, 1] = a
        field[:, 0, 1] = 0.0
        field[:, :, 0] = 1.0 - field[:, :, 1]
        want = forward_scan(vals, field, g)
        np.testing.assert_allclose(got, want, atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_three_way_equals_band_scan(self, seed):
        rng = np.random.default_rng(30 + seed)
        h, w = 5, 6
        a = rng.random((h, w, 3)) * 0.3
        vals = rng.standard_normal((h, w))
        got = affinity_propagation(vals, a, "three-way")
        g = column_scan_graph(h, w, THREE_WAY_OFFSETS)
        field = np.zeros((h, w, 4))
        field[:, :, 1:] = a
        field[:, :, 1:][~g.in_range_mask()] = 0.0
        field[:, :, 0] = 1.0 - field[:, :, 1:].sum(axis=2)
        want = forward_scan(vals, field, g)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_magnitude_bound_enforced(self):
        with pytest.raises(ValueError, match="at most 1"):
            affinity_propagation(np.ones((2, 3)), np.full((2, 3), 1.2), "one-way")

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            affinity_propagation(np.ones((2, 2)), np.zeros((2, 2)), "diagonal")

    def test_stream_batch(self):
        rng = np.random.default_rng(4)
        vals = rng.standard_normal((3, 4, 5))
        a = rng.random((4, 5)) * 0.8
        out = affinity_propagation(vals, a, "one-way")
        for s in range(3):
            np.testing.assert_allclose(
                out[s], affinity_propagation(vals[s], a, "one-way"), atol=1e-15)
