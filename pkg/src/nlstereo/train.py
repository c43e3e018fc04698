"""Training loop over synthetic stereograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import stack_batch
from .model import ModelConfig, StereoModel, init_model, train_step


@dataclass(frozen=True)
class TrainSettings:
    steps: int = 2000
    lr: float = 3e-3
    batch_size: int = 4
    seed: int = 0
    lr_decay: float = 0.3        # multiplier applied to lr late in training
    lr_decay_at: float = 0.7     # fraction of steps after which it applies

    def lr_at(self, step: int) -> float:
        if self.lr_decay_at < 1.0 and step >= self.lr_decay_at * self.steps:
            return self.lr * self.lr_decay
        return self.lr


def train_model(samples, config: ModelConfig, settings: TrainSettings,
                log_every: int = 0, log=print):
    """Train a fresh model on the given samples; returns (model, loss history).

    Batches cycle through a seeded shuffle of the dataset; everything is
    deterministic given (config, settings, samples).
    """
    model = init_model(config, seed=settings.seed)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((settings.seed, 0x7a11))))
    order = []
    losses = []
    for step in range(settings.steps):
        if len(order) < settings.batch_size:
            order = list(rng.permutation(len(samples))) + order
        picks = [order.pop() for _ in range(settings.batch_size)]
        left, right, gt, valid = stack_batch([samples[i] for i in picks])
        loss = train_step(left, right, gt, valid, model, settings.lr_at(step))
        losses.append(loss)
        if log_every and (step + 1) % log_every == 0:
            recent = np.mean(losses[-log_every:])
            log(f"step {step + 1:5d}/{settings.steps}  loss {recent:.4f}")
    return model, losses
