"""AdamW with linear warmup, linear decay to zero, and global-norm clipping.

Weight decay is decoupled from the gradient update and applied only to
matrix-shaped tensors (norm gains and biases are exempt, the usual
convention).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .config import OptimizerConfig
from .network import Batch, Seq2Seq


class NonFiniteLossError(RuntimeError):
    """A training step produced a non-finite loss; carries the batch."""

    def __init__(self, loss: float, batch: Batch):
        super().__init__(f"non-finite loss {loss!r}; aborting step")
        self.loss = loss
        self.batch = batch


def lr_at(step: int, cfg: OptimizerConfig) -> float:
    """Learning rate for 1-based ``step``: linear warmup to the peak, then
    linear decay reaching zero at total_steps."""
    if step < 1:
        raise ValueError("step is 1-based")
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    if cfg.total_steps == cfg.warmup_steps:
        return cfg.peak_lr
    frac = (cfg.total_steps - step) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.peak_lr * max(0.0, frac)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * np.asarray(scale, dtype=grads[name].dtype)
    return norm


class AdamW:
    def __init__(self, cfg: OptimizerConfig, model: Seq2Seq):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}

    def apply(self, model: Seq2Seq, grads: dict[str, np.ndarray]) -> float:
        """One update; returns the learning rate used."""
        if set(grads) != set(model.params):
            raise ValueError("gradient tensors do not match optimizer state")
        self.step_count += 1
        t = self.step_count
        lr = lr_at(t, self.cfg)
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        for name, p in model.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + eps)
            if self.cfg.weight_decay > 0 and p.ndim >= 2:
                update = update + self.cfg.weight_decay * p
            p -= np.asarray(lr, dtype=p.dtype) * update.astype(p.dtype)
        return lr

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"opt.m.{k}": v for k, v in self.m.items()}
        out.update({f"opt.v.{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, tensors: dict[str, np.ndarray], step_count: int) -> None:
        for k in self.m:
            self.m[k] = np.asarray(tensors[f"opt.m.{k}"], dtype=self.m[k].dtype)
            self.v[k] = np.asarray(tensors[f"opt.v.{k}"], dtype=self.v[k].dtype)
        self.step_count = step_count


def train_step(
    model: Seq2Seq,
    optimizer: AdamW,
    batch: Batch,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Forward, backward, clip, AdamW update. Returns the batch loss.

    Raises :class:`NonFiniteLossError` (leaving parameters untouched) when
    the loss is NaN or infinite.
    """
    loss, grads = model.loss_and_grads(batch, train=True, rng=rng)
    if not math.isfinite(loss):
        raise NonFiniteLossError(loss, batch)
    clip_global_norm(grads, optimizer.cfg.clip_norm)
    optimizer.apply(model, grads)
    return loss
