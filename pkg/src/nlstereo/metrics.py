"""Disparity metrics: threshold error rates and end-point error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import IDENTITY_SHIFT, apply_shift, stack_batch
from .model import StereoModel, forward

THRESHOLDS = (1.0, 2.0, 3.0)


@dataclass(frozen=True)
class Metrics:
    """Error rates (%) at 1/2/3 px plus mean absolute error, pooled over pixels."""

    px1: float
    px2: float
    px3: float
    epe: float
    valid_pixels: int

    def rate(self, threshold: float) -> float:
        return {1.0: self.px1, 2.0: self.px2, 3.0: self.px3}[float(threshold)]

    def __str__(self):
        return (f">1px {self.px1:6.2f}%  >2px {self.px2:6.2f}%  >3px {self.px3:6.2f}%  "
                f"EPE {self.epe:.3f}px  ({self.valid_pixels} px)")


def compute_metrics(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> Metrics:
    """Pooled metrics over the valid pixels of stacked (n, h, w) maps."""
    valid = np.asarray(valid, dtype=bool)
    m = int(valid.sum())
    if m == 0:
        raise ValueError("compute_metrics: no valid pixels")
    err = np.abs(np.asarray(pred, dtype=np.float64) - gt)[valid]
    rates = [100.0 * float((err > t).mean()) for t in THRESHOLDS]
    return Metrics(rates[0], rates[1], rates[2], float(err.mean()), m)


def evaluate(model: StereoModel, samples, shift=None, shift_seed: int = 0,
             batch_size: int = 8) -> Metrics:
    """Run the model over a dataset and pool metrics across all samples."""
    if not samples:
        raise ValueError("evaluate: empty dataset")
    if shift is not None and not shift.is_identity:
        samples = [apply_shift(s, shift, seed=shift_seed + i)
                   for i, s in enumerate(samples)]
    preds, gts, valids = [], [], []
    for i in range(0, len(samples), batch_size):
        left, right, gt, valid = stack_batch(samples[i : i + batch_size])
        disp, _ = forward(left, right, model, training=False)
        preds.append(disp)
        gts.append(gt)
        valids.append(valid)
    return compute_metrics(np.concatenate(preds), np.concatenate(gts),
                           np.concatenate(valids))
