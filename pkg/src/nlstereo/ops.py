"""Dense-tensor primitives: convolution, activations, losses, Adam, grad checking.

Array conventions used throughout the package:

* 4-D feature maps are float64 ndarrays in (n, c, h, w) layout, C-contiguous
  (w fastest).
* 5-D cost volumes are (n, c, d, h, w) with d the disparity axis.

Everything here is a pure function of its inputs except the explicit
gradient accumulation into :class:`Param`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_EPS = 1e-8


@dataclass
class Param:
    """A trainable array bundled with its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m1: np.ndarray = field(init=False)
    m2: np.ndarray = field(init=False)
    step_count: int = field(init=False, default=0)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m1 = np.zeros_like(self.value)
        self.m2 = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# 2-D convolution (zero padding, square strides, bias-free)
# ---------------------------------------------------------------------------

def conv2d_out_shape(h: int, w: int, kh: int, kw: int, stride: int, pad: int):
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def _tap_view(xp: np.ndarray, u: int, v: int, oh: int, ow: int, stride: int) -> np.ndarray:
    """The (n, c, oh, ow) window of the padded input hit by kernel tap (u, v)."""
    return xp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride]


def conv2d_forward(x: np.ndarray, kernels: Param, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Zero-padded 2-D convolution of (n, c, h, w) with (out_c, in_c, kh, kw) kernels.

    Evaluated as one matmul per kernel tap over strided views, which avoids
    materializing im2col patch matrices.
    """
    x = _as_f64(x)
    k = kernels.value
    if x.ndim != 4 or k.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernels, got {x.shape} and {k.shape}")
    out_c, in_c, kh, kw = k.shape
    if x.shape[1] != in_c:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} vs kernels {k.shape}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    n, _, h, w = x.shape
    oh, ow = conv2d_out_shape(h, w, kh, kw, stride, pad)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        out = np.matmul(k[:, :, 0, 0], x.reshape(n, in_c, oh * ow))
        return np.ascontiguousarray(out.reshape(n, out_c, oh, ow))
    # per-tap GEMM on the contiguous input, accumulated into shifted output
    # windows; out(y, x) += (W_uv @ x)(stride*y + u - pad, stride*x + v - pad)
    x3 = x.reshape(n, in_c, h * w)
    out = np.zeros((n, out_c, oh, ow))
    for u in range(kh):
        for v in range(kw):
            s = np.matmul(k[:, :, u, v], x3).reshape(n, out_c, h, w)
            # source row for output row y is stride*y + du; keep it in [0, h)
            du, dv = u - pad, v - pad
            y0 = max(0, int(np.ceil(-du / stride)))
            y1 = min(oh, int(np.ceil((h - du) / stride)))
            x0 = max(0, int(np.ceil(-dv / stride)))
            x1 = min(ow, int(np.ceil((w - dv) / stride)))
            if y0 >= y1 or x0 >= x1:
                continue
            out[:, :, y0:y1, x0:x1] += s[
                :, :,
                stride * y0 + du : stride * (y1 - 1) + du + 1 : stride,
                stride * x0 + dv : stride * (x1 - 1) + dv + 1 : stride,
            ]
    return np.ascontiguousarray(out.reshape(n, out_c, oh, ow))


def conv2d_backward(
    upstream: np.ndarray, saved_input: np.ndarray, kernels: Param,
    stride: int = 1, pad: int = 0,
) -> np.ndarray:
    """Backward pass of :func:`conv2d_forward`.

    Returns the input gradient; kernel gradients are accumulated into
    ``kernels.grad``.
    """
    upstream = _as_f64(upstream)
    x = _as_f64(saved_input)
    k = kernels.value
    out_c, in_c, kh, kw = k.shape
    n = x.shape[0]
    oh, ow = conv2d_out_shape(x.shape[2], x.shape[3], kh, kw, stride, pad)
    if upstream.shape != (n, out_c, oh, ow):
        raise ValueError(
            f"conv2d upstream shape {upstream.shape} does not match output {(n, out_c, oh, ow)}"
        )
    g = upstream.reshape(n, out_c, oh * ow)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        x3 = x.reshape(n, in_c, oh * ow)
        kernels.grad[:, :, 0, 0] += np.matmul(g, x3.transpose(0, 2, 1)).sum(axis=0)
        grad_x = np.matmul(k[:, :, 0, 0].T, g)
        return np.ascontiguousarray(grad_x.reshape(n, in_c, oh, ow))
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad > 0 else x
    grad_xp = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            tap = _tap_view(xp, u, v, oh, ow, stride)
            if not tap.flags.c_contiguous:
                tap = np.ascontiguousarray(tap)
            tap3 = tap.reshape(n, in_c, oh * ow)
            # batched GEMM with a transposed view; summed over the batch
            kernels.grad[:, :, u, v] += np.matmul(g, tap3.transpose(0, 2, 1)).sum(axis=0)
            _tap_view(grad_xp, u, v, oh, ow, stride)[...] += np.matmul(
                k[:, :, u, v].T, g).reshape(n, in_c, oh, ow)
    if pad > 0:
        grad_xp = grad_xp[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(grad_xp)


# ---------------------------------------------------------------------------
# Elementwise nonlinearity
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(_as_f64(x), 0.0)


def relu_backward(upstream: np.ndarray, saved_input: np.ndarray) -> np.ndarray:
    return np.where(_as_f64(saved_input) > 0.0, _as_f64(upstream), 0.0)


# ---------------------------------------------------------------------------
# Softmax over the disparity axis of a cost volume
# ---------------------------------------------------------------------------

def softmax_axis(x: np.ndarray, axis: int = 2) -> np.ndarray:
    """Numerically stabilized softmax along one axis (default: d of (n,c,d,h,w))."""
    x = _as_f64(x)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_axis_backward(upstream: np.ndarray, saved_output: np.ndarray, axis: int = 2) -> np.ndarray:
    p = saved_output
    dot = (upstream * p).sum(axis=axis, keepdims=True)
    return p * (upstream - dot)


# ---------------------------------------------------------------------------
# Smooth-L1 regression loss
# ---------------------------------------------------------------------------

def smooth_l1(pred: np.ndarray, target: np.ndarray, valid_mask: np.ndarray):
    """Masked smooth-L1: per-pixel 0.5 e^2 for |e| < 1, |e| - 0.5 otherwise.

    Returns (mean loss over valid pixels, gradient w.r.t. pred).
    """
    pred = _as_f64(pred)
    target = _as_f64(target)
    mask = np.asarray(valid_mask, dtype=bool)
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError(
            f"smooth_l1 shape mismatch: pred {pred.shape}, target {target.shape}, mask {mask.shape}"
        )
    m = int(mask.sum())
    if m == 0:
        raise ValueError("smooth_l1: empty valid mask")
    e = np.where(mask, pred - target, 0.0)
    ae = np.abs(e)
    quad = ae < 1.0
    per_pixel = np.where(quad, 0.5 * e * e, ae - 0.5)
    loss = float(per_pixel[mask].sum() / m)
    grad = np.where(quad, e, np.sign(e)) / m
    grad[~mask] = 0.0
    return loss, grad


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_step(param: Param, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update in place; zeroes the gradient afterwards."""
    param.step_count += 1
    t = param.step_count
    g = param.grad
    param.m1 += (1.0 - beta1) * (g - param.m1)
    param.m2 += (1.0 - beta2) * (g * g - param.m2)
    m1_hat = param.m1 / (1.0 - beta1 ** t)
    m2_hat = param.m2 / (1.0 - beta2 ** t)
    param.value -= lr * m1_hat / (np.sqrt(m2_hat) + eps)
    param.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, params, h: float = 1e-5, rng=None, max_coords: int = 20) -> float:
    """Compare analytic gradients against central finite differences.

    ``f()`` must return a finite scalar loss and leave d(loss)/d(param) in
    each ``param.grad``.  A random subsample of at most ``max_coords``
    coordinates per parameter is probed; returns the maximum relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if isinstance(params, Param):
        params = [params]

    for p in params:
        p.zero_grad()
    loss = float(f())
    if not np.isfinite(loss):
        raise ValueError(f"grad_check: non-finite loss {loss}")
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ag in zip(params, analytic):
        flat = p.value.reshape(-1)
        n = flat.size
        idx = rng.permutation(n)[: min(max_coords, n)]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            for q in params:
                q.zero_grad()
            lo_hi = float(f())
            flat[i] = orig - h
            for q in params:
                q.zero_grad()
            lo_lo = float(f())
            flat[i] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * h)
            a = ag.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    for q in params:
        q.zero_grad()
    return worst
