"""Synthetic stereo data: random-dot stereograms with controllable domain shift.

Scenes are piecewise-constant disparity fields (random rectangles over a
background plane) rendered as random-dot textures, so ground truth is exact
by construction.  The right view is built by forward-warping the left view;
nearer surfaces win conflicts, pixels invisible in the right view are
masked invalid, and disoccluded right-view pixels get fresh texture.

Generation is driven by an explicitly seeded PCG64 generator with one
derived stream per sample, making datasets bit-reproducible across runs
and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DomainShift:
    """Photometric perturbation axes applied identically to both views."""

    brightness: float = 0.0
    contrast: float = 1.0
    gamma: float = 1.0
    noise_std: float = 0.0
    color_gains: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.contrast <= 0 or self.gamma <= 0:
            raise ValueError("contrast and gamma must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if any(g <= 0 for g in self.color_gains):
            raise ValueError("color gains must be positive")

    @property
    def is_identity(self) -> bool:
        return (self.brightness == 0.0 and self.contrast == 1.0 and self.gamma == 1.0
                and self.noise_std == 0.0 and all(g == 1.0 for g in self.color_gains))


IDENTITY_SHIFT = DomainShift()


@dataclass(frozen=True)
class DatasetSpec:
    count: int
    height: int
    width: int
    max_disparity: int
    shape_density: float = 0.5   # target fraction of area covered by rectangles
    rng_seed: int = 0
    channels: int = 3
    dot_size: int = 2            # random-dot granularity in pixels

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.max_disparity >= self.width:
            raise ValueError(
                f"max_disparity {self.max_disparity} must be below width {self.width}"
            )
        if self.max_disparity < 0 or self.height < 8 or self.width < 8:
            raise ValueError("need max_disparity >= 0 and extents >= 8")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if not 0.0 <= self.shape_density <= 1.0:
            raise ValueError("shape_density must be in [0, 1]")
        if self.dot_size < 1:
            raise ValueError("dot_size must be >= 1")


@dataclass(eq=False)
class Sample:
    """One stereo pair with exact ground truth; images are (1, c, h, w)."""

    left: np.ndarray
    right: np.ndarray
    gt_disparity: np.ndarray   # (h, w) float64, left-view disparities
    valid: np.ndarray          # (h, w) bool; False on occluded/out-of-frame


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def _random_disparity_field(rng, spec: DatasetSpec) -> np.ndarray:
    h, w, dmax = spec.height, spec.width, spec.max_disparity
    disp = np.full((h, w), float(rng.integers(0, dmax // 3 + 1)))
    target = spec.shape_density * h * w
    covered = np.zeros((h, w), dtype=bool)
    for _ in range(64):
        if covered.sum() >= target:
            break
        rh = int(rng.integers(max(2, h // 8), max(3, h // 2)))
        rw = int(rng.integers(max(2, w // 8), max(3, w // 2)))
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        disp[y0 : y0 + rh, x0 : x0 + rw] = float(rng.integers(0, dmax + 1))
        covered[y0 : y0 + rh, x0 : x0 + rw] = True
    return disp


def _random_texture(rng, channels: int, h: int, w: int, dot_size: int) -> np.ndarray:
    if dot_size == 1:
        return rng.random((channels, h, w))
    ch = -(-h // dot_size)
    cw = -(-w // dot_size)
    coarse = rng.random((channels, ch, cw))
    fine = np.repeat(np.repeat(coarse, dot_size, axis=1), dot_size, axis=2)
    return np.ascontiguousarray(fine[:, :h, :w])


def _render_pair(rng, disp: np.ndarray, channels: int, dot_size: int):
    """Forward-warp a random texture; returns (left, right, visible)."""
    h, w = disp.shape
    left = _random_texture(rng, channels, h, w, dot_size)
    right = np.zeros_like(left)
    painted = np.zeros((h, w), dtype=bool)
    visible = np.zeros((h, w), dtype=bool)
    d_int = np.rint(disp).astype(np.int64)
    xs = np.arange(w)
    for y in range(h):
        xr = xs - d_int[y]
        in_frame = xr >= 0
        # paint far-to-near so the nearest surface wins each target pixel
        order = np.argsort(d_int[y], kind="stable")
        src = xs[order]
        src = src[in_frame[order]]
        tgt = xr[order][in_frame[order]]
        right[:, y, tgt] = left[:, y, src]
        painted[y, tgt] = True
        winner = np.full(w, -1, dtype=np.int64)
        winner[tgt] = src
        visible[y] = in_frame & (winner[xr.clip(0)] == xs)
    holes = ~painted
    if holes.any():
        right[:, holes] = rng.random((channels, int(holes.sum())))
    return left, right, visible


def generate_rds(spec: DatasetSpec):
    """Deterministic random-dot stereogram dataset; one derived stream per sample."""
    samples = []
    for i in range(spec.count):
        rng = _sample_rng(spec.rng_seed, i)
        disp = _random_disparity_field(rng, spec)
        left, right, visible = _render_pair(rng, disp, spec.channels, spec.dot_size)
        samples.append(Sample(
            left=left[None],
            right=right[None],
            gt_disparity=disp,
            valid=visible,
        ))
    return samples


def _transform_image(img: np.ndarray, shift: DomainShift, rng) -> np.ndarray:
    c = img.shape[1]
    gains = np.asarray(shift.color_gains[:c], dtype=np.float64)[None, :, None, None]
    base = shift.contrast * (img - 0.5) + 0.5 + shift.brightness
    base = np.maximum(base, 0.0)  # keep the gamma power real-valued
    out = gains * base ** shift.gamma
    if shift.noise_std > 0:
        out = out + rng.normal(0.0, shift.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def apply_shift(sample: Sample, shift: DomainShift, seed: int = 0) -> Sample:
    """Photometrically perturb both views; geometry and masks are untouched."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x5f17))))
    return Sample(
        left=_transform_image(sample.left, shift, rng),
        right=_transform_image(sample.right, shift, rng),
        gt_disparity=sample.gt_disparity.copy(),
        valid=sample.valid.copy(),
    )


def stack_batch(samples):
    """Stack a list of samples into batch arrays (left, right, gt, valid)."""
    left = np.concatenate([s.left for s in samples], axis=0)
    right = np.concatenate([s.right for s in samples], axis=0)
    gt = np.stack([s.gt_disparity for s in samples])
    valid = np.stack([s.valid for s in samples])
    return left, right, gt, valid
