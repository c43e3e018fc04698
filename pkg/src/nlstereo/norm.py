"""Feature normalization layers: batch, instance, and domain variants.

All three share the same spatial-normalization core.  The batch variant
pools statistics over (n, h, w) per channel and keeps running buffers for
inference; the instance variant pools over (h, w) per sample and channel;
the domain variant is the instance variant followed by a per-pixel L2
normalization of each channel vector, which pins every pixel's feature
norm to (nearly) one regardless of input gain, offset, or style.  A
trainable per-channel scale and shift ends each variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import Param

DEFAULT_EPS = 1e-5

BATCH = "batch"
INSTANCE = "instance"
DOMAIN = "domain"
NORM_KINDS = (BATCH, INSTANCE, DOMAIN)


@dataclass
class NormParams:
    """Per-channel scale/shift plus the shared variance/norm epsilon."""

    gamma: Param
    beta: Param
    eps: float = DEFAULT_EPS

    @classmethod
    def identity(cls, channels: int, eps: float = DEFAULT_EPS) -> "NormParams":
        return cls(Param(np.ones(channels)), Param(np.zeros(channels)), eps)

    @property
    def channels(self) -> int:
        return self.gamma.value.shape[0]


@dataclass
class NormMode:
    """Variant selector; running buffers exist only for the batch variant."""

    kind: str
    momentum: float = 0.1
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"norm kind must be one of {NORM_KINDS}, got {self.kind!r}")
        if self.kind != BATCH and (self.running_mean is not None or self.running_var is not None):
            raise ValueError("running statistics are only kept in batch mode")

    @classmethod
    def batch(cls, channels: int, momentum: float = 0.1) -> "NormMode":
        return cls(BATCH, momentum, np.zeros(channels), np.ones(channels))

    @classmethod
    def instance(cls) -> "NormMode":
        return cls(INSTANCE)

    @classmethod
    def domain(cls) -> "NormMode":
        return cls(DOMAIN)


@dataclass(eq=False)
class NormSaved:
    """Forward intermediates retained for the analytic backward pass."""

    kind: str
    mu: np.ndarray
    sigma: np.ndarray
    x_hat: np.ndarray
    chnorm: np.ndarray | None  # (n, 1, h, w) channel-vector norms, domain only
    x_prime: np.ndarray | None
    m: int                     # size of each normalization set
    used_running: bool = False


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def instance_stats(x: np.ndarray, eps: float = DEFAULT_EPS):
    """Per-sample per-channel spatial mean and std; sigma = sqrt(var + eps)."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=(2, 3))
    var = ((x - mu[:, :, None, None]) ** 2).mean(axis=(2, 3))
    return mu, np.sqrt(var + eps)


def batch_stats(x: np.ndarray, eps: float = DEFAULT_EPS):
    """Per-channel mean and std pooled over the whole batch."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=(0, 2, 3))
    var = ((x - mu[None, :, None, None]) ** 2).mean(axis=(0, 2, 3))
    return mu, np.sqrt(var + eps)


def normalize_spatial(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """x_hat = (x - mu) / sigma with stats broadcast over the spatial axes."""
    x = np.asarray(x, dtype=np.float64)
    if mu.ndim == 1:  # batch statistics
        return (x - mu[None, :, None, None]) / sigma[None, :, None, None]
    return (x - mu[:, :, None, None]) / sigma[:, :, None, None]


def normalize_channel_l2(x_hat: np.ndarray, eps: float = DEFAULT_EPS):
    """Divide each pixel's channel vector by sqrt(sum of squares + eps).

    Near-zero vectors pass through as near-zero (the eps floor), they are
    not blown up to unit length.  Returns (x_prime, norms) with norms
    shaped (n, 1, h, w).
    """
    x_hat = np.asarray(x_hat, dtype=np.float64)
    chnorm = np.sqrt((x_hat * x_hat).sum(axis=1, keepdims=True) + eps)
    return x_hat / chnorm, chnorm


def scale_shift(x_prime: np.ndarray, params: NormParams) -> np.ndarray:
    """y = gamma_c * x + beta_c."""
    c = x_prime.shape[1]
    if params.channels != c:
        raise ValueError(f"scale/shift has {params.channels} channels, input has {c}")
    g = params.gamma.value[None, :, None, None]
    b = params.beta.value[None, :, None, None]
    return g * x_prime + b


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def dn_forward(x: np.ndarray, params: NormParams, mode: NormMode, training: bool = True):
    """Normalize a (n, c, h, w) map per ``mode``; returns (y, saved)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected (n, c, h, w) input, got shape {x.shape}")
    eps = params.eps
    n, c, h, w = x.shape

    used_running = False
    if mode.kind == BATCH:
        if training:
            mu, sigma = batch_stats(x, eps)
            var = sigma * sigma - eps
            mom = mode.momentum
            mode.running_mean += mom * (mu - mode.running_mean)
            mode.running_var += mom * (var - mode.running_var)
        else:
            mu = mode.running_mean.copy()
            sigma = np.sqrt(mode.running_var + eps)
            used_running = True
        m = n * h * w
    else:
        mu, sigma = instance_stats(x, eps)
        m = h * w

    x_hat = normalize_spatial(x, mu, sigma)
    if mode.kind == DOMAIN:
        x_prime, chnorm = normalize_channel_l2(x_hat, eps)
        y = scale_shift(x_prime, params)
    else:
        x_prime, chnorm = None, None
        y = scale_shift(x_hat, params)
    saved = NormSaved(mode.kind, mu, sigma, x_hat, chnorm, x_prime, m, used_running)
    return y, saved


def dn_backward(upstream: np.ndarray, saved: NormSaved, params: NormParams):
    """Analytic gradients; returns (input_grad, gamma_grad, beta_grad)."""
    upstream = np.asarray(upstream, dtype=np.float64)
    z = saved.x_prime if saved.kind == DOMAIN else saved.x_hat
    gamma_grad = (upstream * z).sum(axis=(0, 2, 3))
    beta_grad = upstream.sum(axis=(0, 2, 3))
    gz = upstream * params.gamma.value[None, :, None, None]

    if saved.kind == DOMAIN:
        # u' = u / r with r = sqrt(|u|^2 + eps):
        # dE/du = g/r - u * <g, u> / r^3
        r = saved.chnorm
        dot = (gz * saved.x_hat).sum(axis=1, keepdims=True)
        g_hat = gz / r - saved.x_hat * dot / (r ** 3)
    else:
        g_hat = gz

    if saved.used_running:
        grad_x = g_hat / saved.sigma[None, :, None, None]
        return grad_x, gamma_grad, beta_grad

    # through mu/sigma: dE/dx = (g - mean(g) - x_hat * mean(g * x_hat)) / sigma
    if saved.kind == BATCH:
        axes = (0, 2, 3)
        sigma = saved.sigma[None, :, None, None]
    else:
        axes = (2, 3)
        sigma = saved.sigma[:, :, None, None]
    mean_g = g_hat.mean(axis=axes, keepdims=True)
    mean_gx = (g_hat * saved.x_hat).mean(axis=axes, keepdims=True)
    grad_x = (g_hat - mean_g - saved.x_hat * mean_gx) / sigma
    return grad_x, gamma_grad, beta_grad


# ---------------------------------------------------------------------------
# Norm-distribution diagnostic
# ---------------------------------------------------------------------------

def channel_vector_norms(features: np.ndarray) -> np.ndarray:
    """Per-pixel L2 norm of the channel vector; (n, h, w)."""
    features = np.asarray(features, dtype=np.float64)
    return np.sqrt((features * features).sum(axis=1))


def norm_histogram(features: np.ndarray, bins: int, value_range=None):
    """Histogram of per-pixel channel-vector norms; returns (centers, counts)."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    norms = channel_vector_norms(features).ravel()
    counts, edges = np.histogram(norms, bins=bins, range=value_range)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts


def histogram_to_text(centers: np.ndarray, counts: np.ndarray) -> str:
    """Two-column plain text (bin_center, count), one bin per line."""
    lines = [f"{c:.9g}\t{int(k)}" for c, k in zip(centers, counts)]
    return "\n".join(lines) + "\n"
