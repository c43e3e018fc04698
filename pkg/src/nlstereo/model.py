"""Desk-scale end-to-end stereo network.

Shared-weight feature extractor (conv -> norm -> relu blocks with optional
non-local filter insertions), concatenation cost volume, per-disparity-slice
2-D aggregation convolutions interleaved with guided cost-volume filtering,
and soft-argmin disparity regression.  Forward passes retain the state the
hand-derived backward needs; ``train_step`` runs one Adam update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filtering.filter import (
    FilterSaved,
    cost_filter_backward,
    cost_filter_forward,
    filter_backward,
    filter_forward,
)
from .norm import NormMode, NormParams, NormSaved, dn_backward, dn_forward
from .ops import (
    Param,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
    smooth_l1,
    softmax_axis,
)

NORM_KINDS = ("batch", "instance", "domain")


@dataclass(frozen=True)
class ModelConfig:
    norm_kind: str = "domain"
    nlf_feature_layers: int = 2
    nlf_cost_layers: int = 1
    conv_widths: tuple = (16, 16, 16)
    agg_width: int = 16
    max_disparity: int = 16        # at working resolution
    downsample: int = 2
    in_channels: int = 3

    def __post_init__(self):
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"norm_kind must be one of {NORM_KINDS}, got {self.norm_kind!r}")
        if self.max_disparity < 1:
            raise ValueError("max_disparity must be >= 1")
        if self.nlf_feature_layers < 0 or self.nlf_cost_layers < 0:
            raise ValueError("filter-layer counts must be >= 0")
        if len(self.conv_widths) < 1 or any(w < 1 for w in self.conv_widths):
            raise ValueError("conv_widths must be a non-empty tuple of positive ints")
        if self.downsample not in (1, 2):
            raise ValueError("downsample must be 1 or 2")
        if self.in_channels not in (1, 3):
            raise ValueError("in_channels must be 1 or 3")

    @property
    def feature_channels(self) -> int:
        return self.conv_widths[-1]


def extractor_plan(config: ModelConfig):
    """Layer sequence: ('conv', i) and ('nlf',) entries, each norm+relu'd.

    Filter layers follow the deepest convolution blocks; surplus ones (more
    filters than non-initial convs) are appended at the end.
    """
    n_convs = len(config.conv_widths)
    n_nlf = config.nlf_feature_layers
    after = set(range(max(1, n_convs - n_nlf), n_convs))
    plan = []
    for i in range(n_convs):
        plan.append(("conv", i))
        if i in after:
            plan.append(("nlf",))
    for _ in range(n_nlf - len(after)):
        plan.append(("nlf",))
    return plan


@dataclass(eq=False)
class StereoModel:
    config: ModelConfig
    conv_params: list          # one Param per extractor conv block
    norm_params: list          # one NormParams per extractor site
    norm_modes: list           # one NormMode per extractor site
    agg_convs: list            # 1x1 matching MLP: 2C -> A -> A -> 1

    def named_parameters(self):
        out = []
        for i, p in enumerate(self.conv_params):
            out.append((f"conv{i}", p))
        for i, np_ in enumerate(self.norm_params):
            out.append((f"norm{i}.gamma", np_.gamma))
            out.append((f"norm{i}.beta", np_.beta))
        for i, p in enumerate(self.agg_convs):
            out.append((f"agg_conv{i}", p))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def _fan_in_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(config: ModelConfig, seed: int = 0) -> StereoModel:
    rng = np.random.default_rng(np.random.PCG64(seed))
    convs = []
    in_c = config.in_channels
    for width in config.conv_widths:
        convs.append(Param(_fan_in_uniform(rng, (width, in_c, 3, 3))))
        in_c = width

    site_channels = []
    conv_idx = 0
    cur = config.in_channels
    for entry in extractor_plan(config):
        if entry[0] == "conv":
            cur = config.conv_widths[conv_idx]
            conv_idx += 1
        site_channels.append(cur)

    norm_params = [NormParams.identity(c) for c in site_channels]
    if config.norm_kind == "batch":
        norm_modes = [NormMode.batch(c) for c in site_channels]
    elif config.norm_kind == "instance":
        norm_modes = [NormMode.instance() for _ in site_channels]
    else:
        norm_modes = [NormMode.domain() for _ in site_channels]

    c2 = 2 * config.feature_channels
    a = config.agg_width
    agg_convs = [
        Param(_fan_in_uniform(rng, (a, c2, 1, 1))),
        Param(_fan_in_uniform(rng, (a, a, 1, 1))),
        Param(_fan_in_uniform(rng, (1, a, 1, 1))),
    ]
    return StereoModel(config, convs, norm_params, norm_modes, agg_convs)


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LayerSaved:
    kind: str
    x_in: np.ndarray            # layer input (conv input / filter input)
    z: np.ndarray               # pre-norm output
    norm_saved: NormSaved
    pre_relu: np.ndarray
    nlf_saves: list | None = None   # per-sample FilterSaved for nlf layers
    conv_index: int | None = None


def extract_features(image: np.ndarray, model: StereoModel, training: bool = True):
    """Run the extractor; returns (features, guide, per-layer saved state).

    The guide is the final pre-norm feature map; filter layers use their own
    input as guidance (self-regularized, no extra parameters).
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != model.config.in_channels:
        raise ValueError(
            f"expected (n, {model.config.in_channels}, h, w) images, got {x.shape}"
        )
    saves = []
    conv_idx = 0
    for site, entry in enumerate(extractor_plan(model.config)):
        if entry[0] == "conv":
            stride = model.config.downsample if conv_idx == 0 else 1
            z = conv2d_forward(x, model.conv_params[conv_idx], stride=stride, pad=1)
            this_conv = conv_idx
            nlf_saves = None
            conv_idx += 1
        else:
            n = x.shape[0]
            z = np.empty_like(x)
            nlf_saves = []
            for i in range(n):
                z[i], sv = filter_forward(x[i], x[i])
                nlf_saves.append(sv)
            this_conv = None
        pre_relu, norm_saved = dn_forward(
            z, model.norm_params[site], model.norm_modes[site], training=training)
        out = relu(pre_relu)
        saves.append(LayerSaved(entry[0], x, z, norm_saved, pre_relu, nlf_saves, this_conv))
        x = out
    guide = saves[-1].z
    return x, guide, saves


def extract_backward(grad_out: np.ndarray, grad_guide: np.ndarray | None,
                     saves, model: StereoModel) -> np.ndarray:
    """Backward through the extractor, accumulating parameter gradients.

    ``grad_guide`` (if given) enters at the final pre-norm feature map.
    Returns the gradient w.r.t. the input image.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    for site in range(len(saves) - 1, -1, -1):
        sv = saves[site]
        g = relu_backward(g, sv.pre_relu)
        g, gamma_g, beta_g = dn_backward(g, sv.norm_saved, model.norm_params[site])
        model.norm_params[site].gamma.grad += gamma_g
        model.norm_params[site].beta.grad += beta_g
        if site == len(saves) - 1 and grad_guide is not None:
            g = g + grad_guide
        if sv.kind == "conv":
            stride = model.config.downsample if sv.conv_index == 0 else 1
            g = conv2d_backward(g, sv.x_in, model.conv_params[sv.conv_index],
                                stride=stride, pad=1)
        else:
            g_in = np.empty_like(g)
            for i in range(g.shape[0]):
                gv, gg = filter_backward(g[i], sv.nlf_saves[i])
                g_in[i] = gv + gg  # the filter input doubles as its own guide
            g = g_in
    return g


# ---------------------------------------------------------------------------
# Cost volume
# ---------------------------------------------------------------------------

def build_cost_volume(f_left: np.ndarray, f_right: np.ndarray, max_disparity: int):
    """Concatenation volume: (n, 2c, d, h, w) plus an in-frame validity mask."""
    f_left = np.asarray(f_left, dtype=np.float64)
    f_right = np.asarray(f_right, dtype=np.float64)
    if f_left.shape != f_right.shape:
        raise ValueError(f"feature shapes differ: {f_left.shape} vs {f_right.shape}")
    n, c, h, w = f_left.shape
    if max_disparity > w:
        raise ValueError(f"max_disparity {max_disparity} exceeds feature width {w}")
    cv = np.zeros((n, 2 * c, max_disparity, h, w))
    mask = np.zeros((n, max_disparity, h, w), dtype=bool)
    for d in range(max_disparity):
        cv[:, :c, d] = f_left
        if d == 0:
            cv[:, c:, d] = f_right
        else:
            cv[:, c:, d, :, d:] = f_right[:, :, :, :-d]
        mask[:, d, :, d:] = True
    return cv, mask


def cost_volume_backward(grad_cv: np.ndarray):
    """Scatter volume gradients back to the two feature maps."""
    n, c2, dmax, h, w = grad_cv.shape
    c = c2 // 2
    grad_left = grad_cv[:, :c].sum(axis=2)
    grad_right = np.zeros((n, c, h, w))
    for d in range(dmax):
        if d == 0:
            grad_right += grad_cv[:, c:, 0]
        else:
            grad_right[:, :, :, :-d] += grad_cv[:, c:, d, :, d:]
    return grad_left, grad_right


# ---------------------------------------------------------------------------
# Cost aggregation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AggSaved:
    mlp_inputs: list            # input volume of each hidden 1x1 conv
    pre_relus: list             # hidden conv outputs before relu
    nlf_saves: list             # per filter layer: list of per-sample saves
    filtered: np.ndarray        # input of the final 1x1 conv


def _conv_volume(x5: np.ndarray, kernels: Param, backward_of=None) -> np.ndarray:
    """Apply a 1x1 slice-shared convolution to an (n, c, d, h, w) volume.

    A 1x1 kernel never mixes pixels, so running it on the volume viewed as
    (n, c, d*h, w) is identical to convolving every disparity slice with the
    same weights, with no transposes.  With ``backward_of`` set to the saved
    forward input, computes the backward pass instead (x5 is the upstream
    gradient).
    """
    if kernels.value.shape[2:] != (1, 1):
        raise ValueError("volume convolutions are 1x1; spatial mixing is the filter's job")
    n, c, d, h, w = x5.shape
    if backward_of is None:
        out = conv2d_forward(x5.reshape(n, c, d * h, w), kernels)
    else:
        ci = backward_of.shape[1]
        out = conv2d_backward(x5.reshape(n, c, d * h, w),
                              backward_of.reshape(n, ci, d * h, w), kernels)
    return out.reshape(n, out.shape[1], d, h, w)


def aggregate_cost(cv: np.ndarray, guide: np.ndarray, model: StereoModel):
    """Per-pixel matching MLP around guided volume filtering; c -> 1.

    Hidden 1x1 convolutions with relu compute per-pixel matching costs from
    the concatenated features; the non-local filter layers between the last
    hidden layer and the final projection supply the spatial aggregation.
    """
    cur = cv
    mlp_inputs, pre_relus = [], []
    for p in model.agg_convs[:-1]:
        mlp_inputs.append(cur)
        z = _conv_volume(cur, p)
        pre_relus.append(z)
        cur = relu(z)
    nlf_saves = []
    for _ in range(model.config.nlf_cost_layers):
        cur, saves = cost_filter_forward(cur, guide)
        nlf_saves.append(saves)
    cost = _conv_volume(cur, model.agg_convs[-1])
    return cost, AggSaved(mlp_inputs, pre_relus, nlf_saves, cur)


def aggregate_backward(grad_cost: np.ndarray, saved: AggSaved, model: StereoModel):
    """Returns (grad_cv, grad_guide), accumulating conv kernel gradients."""
    n, _, d, h, w = grad_cost.shape
    g = _conv_volume(grad_cost, model.agg_convs[-1], backward_of=saved.filtered)
    grad_guide = None
    for saves in reversed(saved.nlf_saves):
        g, gg = cost_filter_backward(g, saves)
        grad_guide = gg if grad_guide is None else grad_guide + gg
    for p, x_in, z in zip(reversed(model.agg_convs[:-1]),
                          reversed(saved.mlp_inputs), reversed(saved.pre_relus)):
        g = relu_backward(g, z)
        g = _conv_volume(g, p, backward_of=x_in)
    if grad_guide is None:
        grad_guide = np.zeros((n, model.config.feature_channels, h, w))
    return g, grad_guide


# ---------------------------------------------------------------------------
# Disparity regression
# ---------------------------------------------------------------------------

def regress_disparity(cost: np.ndarray):
    """Soft argmin: expectation of d under softmax(-cost); (n, h, w)."""
    if cost.ndim != 5 or cost.shape[1] != 1:
        raise ValueError(f"expected (n, 1, d, h, w) cost, got {cost.shape}")
    p = softmax_axis(-cost, axis=2)
    d = cost.shape[2]
    dvals = np.arange(d, dtype=np.float64)[None, None, :, None, None]
    disp = (p * dvals).sum(axis=2)[:, 0]
    return disp, p


def regress_backward(grad_disp: np.ndarray, p: np.ndarray) -> np.ndarray:
    """d expectation through softmax(-cost): dE/dcost = -p * (d - disp) * g."""
    d = p.shape[2]
    dvals = np.arange(d, dtype=np.float64)[None, None, :, None, None]
    disp = (p * dvals).sum(axis=2, keepdims=True)
    return -p * (dvals - disp) * grad_disp[:, None, None]


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def upsample_disparity(disp: np.ndarray, factor: int, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor upsample with disparity values scaled by the factor."""
    if factor == 1:
        return disp[:, :out_h, :out_w]
    up = np.repeat(np.repeat(disp, factor, axis=1), factor, axis=2)
    return factor * up[:, :out_h, :out_w]


def upsample_backward(grad_full: np.ndarray, factor: int, work_h: int, work_w: int) -> np.ndarray:
    if factor == 1:
        out = np.zeros((grad_full.shape[0], work_h, work_w))
        out[:, : grad_full.shape[1], : grad_full.shape[2]] = grad_full
        return out
    n, h, w = grad_full.shape
    padded = np.zeros((n, work_h * factor, work_w * factor))
    padded[:, :h, :w] = grad_full
    blocks = padded.reshape(n, work_h, factor, work_w, factor)
    return factor * blocks.sum(axis=(2, 4))


@dataclass(eq=False)
class ForwardSaved:
    left_saves: list
    right_saves: list
    guide: np.ndarray
    cv_mask: np.ndarray
    agg_saved: AggSaved
    p: np.ndarray
    work_shape: tuple
    full_shape: tuple


def forward(left: np.ndarray, right: np.ndarray, model: StereoModel,
            training: bool = False):
    """Predict a full-resolution disparity map; returns (disparity, saved)."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise ValueError(f"view shapes differ: {left.shape} vs {right.shape}")
    f_l, guide, left_saves = extract_features(left, model, training)
    f_r, _, right_saves = extract_features(right, model, training)
    cv, cv_mask = build_cost_volume(f_l, f_r, model.config.max_disparity)
    cost, agg_saved = aggregate_cost(cv, guide, model)
    disp_work, p = regress_disparity(cost)
    n, _, h, w = left.shape
    disp = upsample_disparity(disp_work, model.config.downsample, h, w)
    saved = ForwardSaved(left_saves, right_saves, guide, cv_mask, agg_saved, p,
                         disp_work.shape[1:], (h, w))
    return disp, saved


def backward(grad_disp: np.ndarray, saved: ForwardSaved, model: StereoModel):
    """Backward through the whole pipeline, accumulating parameter grads."""
    wh, ww = saved.work_shape
    g_work = upsample_backward(grad_disp, model.config.downsample, wh, ww)
    g_cost = regress_backward(g_work, saved.p)
    g_cv, g_guide = aggregate_backward(g_cost, saved.agg_saved, model)
    g_fl, g_fr = cost_volume_backward(g_cv)
    extract_backward(g_fr, None, saved.right_saves, model)
    extract_backward(g_fl, g_guide, saved.left_saves, model)


def train_step(left, right, gt_disparity, valid_mask, model: StereoModel,
               lr: float) -> float:
    """One forward/backward/Adam update; returns the pre-step loss."""
    valid_mask = np.asarray(valid_mask, dtype=bool)
    if not valid_mask.any():
        raise ValueError("train_step: batch has no valid pixels")
    disp, saved = forward(left, right, model, training=True)
    loss, grad = smooth_l1(disp, gt_disparity, valid_mask)
    backward(grad, saved, model)
    for p in model.parameters():
        adam_step(p, lr)
    return loss
