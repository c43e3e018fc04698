import numpy as np
import pytest

from nlstereo.norm import (
    DEFAULT_EPS,
    NormMode,
    NormParams,
    batch_stats,
    channel_vector_norms,
    dn_backward,
    dn_forward,
    histogram_to_text,
    instance_stats,
    norm_histogram,
    normalize_channel_l2,
    normalize_spatial,
    scale_shift,
)
from nlstereo.ops import Param, grad_check


def naive_instance_stats(x, eps):
    """Two-pass per-(n, c) loop, independent of the vectorized path."""
    n, c, h, w = x.shape
    mu = np.zeros((n, c))
    sigma = np.zeros((n, c))
    for i in range(n):
        for j in range(c):
            vals = [x[i, j, y, z] for y in range(h) for z in range(w)]
            m = sum(vals) / len(vals)
            v = sum((v - m) ** 2 for v in vals) / len(vals)
            mu[i, j] = m
            sigma[i, j] = np.sqrt(v + eps)
    return mu, sigma


class TestInstanceStats:
    def test_constant_channel(self):
        x = np.full((1, 1, 3, 4), 5.0)
        mu, sigma = instance_stats(x, eps=1e-5)
        assert mu[0, 0] == pytest.approx(5.0)
        assert sigma[0, 0] == pytest.approx(np.sqrt(1e-5))

    def test_plus_minus_one(self):
        x = np.array([[-1.0, 1.0, -1.0, 1.0]]).reshape(1, 1, 2, 2)
        mu, sigma = instance_stats(x, eps=1e-5)
        assert mu[0, 0] == pytest.approx(0.0)
        assert sigma[0, 0] == pytest.approx(np.sqrt(1.0 + 1e-5))

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 4, 5))
        mu, sigma = instance_stats(x, eps=1e-5)
        mu2, sigma2 = naive_instance_stats(x, 1e-5)
        np.testing.assert_allclose(mu, mu2, atol=1e-12)
        np.testing.assert_allclose(sigma, sigma2, atol=1e-12)


class TestNormalizeSpatial:
    def test_constant_channel_zeros(self):
        x = np.full((1, 2, 3, 3), 7.0)
        mu, sigma = instance_stats(x, 1e-5)
        np.testing.assert_allclose(normalize_spatial(x, mu, sigma), 0.0, atol=1e-12)

    def test_plus_minus_one_small_eps(self):
        x = np.array([[-1.0, 1.0, -1.0, 1.0]]).reshape(1, 1, 2, 2)
        mu, sigma = instance_stats(x, 1e-12)
        out = normalize_spatial(x, mu, sigma)
        np.testing.assert_allclose(out, x, atol=1e-9)

    def test_output_statistics(self):
        rng = np.random.default_rng(1)
        x = 3.0 * rng.standard_normal((2, 4, 8, 9)) + 1.5
        mu, sigma = instance_stats(x, DEFAULT_EPS)
        x_hat = normalize_spatial(x, mu, sigma)
        np.testing.assert_allclose(x_hat.mean(axis=(2, 3)), 0.0, atol=1e-9)
        var = (x_hat ** 2).mean(axis=(2, 3)) - x_hat.mean(axis=(2, 3)) ** 2
        np.testing.assert_allclose(var, 1.0, atol=10 * DEFAULT_EPS)


class TestNormalizeChannelL2:
    def test_zero_vector_stays_zero(self):
        x = np.zeros((1, 3, 2, 2))
        out, _ = normalize_channel_l2(x, 1e-5)
        np.testing.assert_array_equal(out, 0.0)

    def test_three_four_five(self):
        x = np.zeros((1, 2, 1, 1))
        x[0, :, 0, 0] = [3.0, 4.0]
        out, _ = normalize_channel_l2(x, 1e-12)
        np.testing.assert_allclose(out[0, :, 0, 0], [0.6, 0.8], atol=1e-9)

    def test_norms_near_one(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 8, 6, 7))
        out, _ = normalize_channel_l2(x, 1e-5)
        norms = channel_vector_norms(out)
        assert norms.min() >= 1.0 - 1e-4
        assert norms.max() <= 1.0


class TestScaleShift:
    def test_identity(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 3, 4, 4))
        out = scale_shift(x, NormParams.identity(3))
        np.testing.assert_array_equal(out, x)

    def test_beta_broadcast(self):
        p = NormParams(Param(np.ones(2)), Param(np.array([0.5, -2.0])))
        out = scale_shift(np.zeros((1, 2, 2, 2)), p)
        np.testing.assert_array_equal(out[0, 0], 0.5)
        np.testing.assert_array_equal(out[0, 1], -2.0)

    def test_hand_arithmetic(self):
        p = NormParams(Param(np.array([2.0, -1.0])), Param(np.array([0.0, 3.0])))
        x = np.zeros((1, 2, 1, 1))
        x[0, :, 0, 0] = [0.6, 0.8]
        out = scale_shift(x, p)
        np.testing.assert_allclose(out[0, :, 0, 0], [1.2, 2.2], atol=1e-15)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="channels"):
            scale_shift(np.zeros((1, 3, 2, 2)), NormParams.identity(2))


class TestDnForward:
    def test_constant_input_gives_beta(self):
        p = NormParams(Param(np.full(3, 1.7)), Param(np.array([1.0, -2.0, 0.25])))
        x = np.full((2, 3, 4, 4), 9.0)
        y, _ = dn_forward(x, p, NormMode.domain())
        for c in range(3):
            np.testing.assert_allclose(y[:, c], p.beta.value[c], atol=1e-12)

    def test_per_channel_affine_invariance(self):
        rng = np.random.default_rng(4)
        c = 6
        x = 5.0 * rng.standard_normal((2, c, 8, 9))
        a = rng.uniform(0.5, 2.0, size=c)
        b = rng.uniform(-1.0, 1.0, size=c)
        p = NormParams.identity(c)
        y1, s1 = dn_forward(x, p, NormMode.domain())
        y2, s2 = dn_forward(
            a[None, :, None, None] * x + b[None, :, None, None], p, NormMode.domain())
        np.testing.assert_allclose(s2.x_prime, s1.x_prime, atol=1e-6)
        np.testing.assert_allclose(y2, y1, atol=1e-6)

    def test_instance_and_domain_agree_on_binary_single_channel(self):
        # balanced checkerboard: exactly half -1, half +1, so the mean is 0
        ys, xs = np.mgrid[0:6, 0:6]
        x = np.where((ys + xs) % 2 == 0, 1.0, -1.0)[None, None]
        gamma, beta = 1.8, -0.3
        p = NormParams(Param(np.array([gamma])), Param(np.array([beta])))
        y_in, _ = dn_forward(x, p, NormMode.instance())
        y_dn, _ = dn_forward(x, p, NormMode.domain())
        want = np.where(x > 0, gamma + beta, -gamma + beta)
        np.testing.assert_allclose(y_in, want, atol=1e-5)
        np.testing.assert_allclose(y_dn, want, atol=1e-5)
        np.testing.assert_allclose(y_in, y_dn, atol=1e-6)

    def test_mode_equivalences_bitwise(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 3, 5, 5))
        p = NormParams(Param(rng.standard_normal(3)), Param(rng.standard_normal(3)))
        # instance mode == spatial normalization with instance stats + scale/shift
        y_in, _ = dn_forward(x, p, NormMode.instance())
        mu, sigma = instance_stats(x, p.eps)
        want = scale_shift(normalize_spatial(x, mu, sigma), p)
        assert y_in.tobytes() == want.tobytes()
        # batch mode (training) == same with batch statistics
        y_bn, _ = dn_forward(x, p, NormMode.batch(3))
        mu_b, sigma_b = batch_stats(x, p.eps)
        want_b = scale_shift(normalize_spatial(x, mu_b, sigma_b), p)
        assert y_bn.tobytes() == want_b.tobytes()
        # domain mode == instance pipeline with the L2 stage in between
        y_dn, _ = dn_forward(x, p, NormMode.domain())
        x_prime, _ = normalize_channel_l2(normalize_spatial(x, mu, sigma), p.eps)
        want_d = scale_shift(x_prime, p)
        assert y_dn.tobytes() == want_d.tobytes()

    def test_batch_running_stats(self):
        rng = np.random.default_rng(7)
        mode = NormMode.batch(2, momentum=0.5)
        p = NormParams.identity(2)
        x = rng.standard_normal((4, 2, 6, 6)) + 3.0
        dn_forward(x, p, mode, training=True)
        mu_b, sigma_b = batch_stats(x, p.eps)
        np.testing.assert_allclose(mode.running_mean, 0.5 * mu_b, atol=1e-12)
        # inference then uses the running buffers, not the batch
        x2 = rng.standard_normal((1, 2, 6, 6))
        y, saved = dn_forward(x2, p, mode, training=False)
        assert saved.used_running
        want = (x2 - mode.running_mean[None, :, None, None]) / np.sqrt(
            mode.running_var + p.eps)[None, :, None, None]
        np.testing.assert_allclose(y, want, atol=1e-12)

    def test_running_buffers_rejected_outside_batch_mode(self):
        with pytest.raises(ValueError, match="batch mode"):
            NormMode("domain", running_mean=np.zeros(2))


class TestDnBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((1, 2, 3, 3))
        p = NormParams.identity(2)
        _, saved = dn_forward(x, p, NormMode.domain())
        gx, gg, gb = dn_backward(np.zeros_like(x), saved, p)
        np.testing.assert_array_equal(gx, 0.0)
        np.testing.assert_array_equal(gg, 0.0)
        np.testing.assert_array_equal(gb, 0.0)

    def test_beta_grad_is_channel_sum(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 3, 4, 4))
        up = rng.standard_normal(x.shape)
        p = NormParams.identity(3)
        for mode in (NormMode.domain(), NormMode.instance(), NormMode.batch(3)):
            _, saved = dn_forward(x, p, mode)
            _, _, gb = dn_backward(up, saved, p)
            np.testing.assert_allclose(gb, up.sum(axis=(0, 2, 3)), atol=1e-12)

    @pytest.mark.parametrize("kind", ["domain", "instance", "batch"])
    @pytest.mark.parametrize("seed", range(7))
    def test_finite_difference(self, kind, seed):
        rng = np.random.default_rng(1000 + seed)
        c = 3
        x = Param(rng.standard_normal((2, c, 4, 5)))
        p = NormParams(Param(rng.uniform(0.5, 1.5, c)), Param(rng.standard_normal(c)))
        probe = rng.standard_normal(x.value.shape)

        def make_mode():
            return NormMode.batch(c) if kind == "batch" else NormMode(kind)

        def loss():
            y, saved = dn_forward(x.value, p, make_mode())
            gx, gg, gb = dn_backward(probe, saved, p)
            x.grad += gx
            p.gamma.grad += gg
            p.beta.grad += gb
            return float((probe * y).sum())

        err = grad_check(loss, [x, p.gamma, p.beta], rng=rng, max_coords=8)
        assert err < 1e-4

    def test_batch_inference_backward(self):
        rng = np.random.default_rng(10)
        c = 2
        mode = NormMode.batch(c)
        p = NormParams.identity(c)
        dn_forward(rng.standard_normal((4, c, 5, 5)), p, mode, training=True)
        x = Param(rng.standard_normal((1, c, 5, 5)))
        probe = rng.standard_normal(x.value.shape)

        def loss():
            y, saved = dn_forward(x.value, p, mode, training=False)
            gx, _, _ = dn_backward(probe, saved, p)
            x.grad += gx
            return float((probe * y).sum())

        assert grad_check(loss, x, rng=rng, max_coords=8) < 1e-6


class TestNormHistogram:
    def test_domain_normalized_mass_at_one(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 8, 6, 6))
        p = NormParams.identity(8)
        _, saved = dn_forward(x, p, NormMode.domain())
        centers, counts = norm_histogram(saved.x_prime, bins=20, value_range=(0.0, 2.0))
        assert counts.sum() == 2 * 6 * 6
        one_bin = np.argmin(np.abs(centers - 1.0))
        assert counts[one_bin] == counts.sum()

    def test_zero_features(self):
        centers, counts = norm_histogram(np.zeros((1, 3, 4, 4)), bins=10,
                                         value_range=(0.0, 1.0))
        assert counts[0] == 16
        assert counts[1:].sum() == 0

    def test_affine_transform_invariant_histogram(self):
        rng = np.random.default_rng(12)
        c = 5
        x = 5.0 * rng.standard_normal((1, c, 8, 8))
        a = rng.uniform(0.5, 2.0, c)[None, :, None, None]
        b = rng.uniform(-1.0, 1.0, c)[None, :, None, None]
        p = NormParams.identity(c)
        _, s1 = dn_forward(x, p, NormMode.domain())
        _, s2 = dn_forward(a * x + b, p, NormMode.domain())
        h1 = norm_histogram(s1.x_prime, bins=30, value_range=(0.0, 1.5))[1]
        h2 = norm_histogram(s2.x_prime, bins=30, value_range=(0.0, 1.5))[1]
        np.testing.assert_array_equal(h1, h2)

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError, match="bins"):
            norm_histogram(np.zeros((1, 1, 2, 2)), bins=1)

    def test_text_export(self):
        text = histogram_to_text(np.array([0.25, 0.75]), np.array([3, 7]))
        assert text == "0.25\t3\n0.75\t7\n"
