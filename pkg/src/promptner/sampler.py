"""Multi-dataset batch sampling and joint-checkpoint selection.

Batches are drawn either proportionally (uniform over the pooled example
multiset) or uniformly per dataset (pick a dataset, then an example within
it). Sampling is with replacement across batches and without replacement
within a batch whenever the pool is large enough. Every batch is a pure
function of (policy seed, batch index) via counter-based RNG streams, so
streams are reproducible across runs and platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import rng_stream

POLICY_KINDS = ("proportional", "uniform_dataset")


@dataclass(frozen=True)
class SamplingPolicy:
    kind: str = "proportional"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown sampling policy {self.kind!r}")


class BatchSampler:
    """Draws batches of (dataset_id, index) references from dataset pools."""

    def __init__(self, sizes: dict[str, int], policy: SamplingPolicy):
        self.sizes = {ds: int(n) for ds, n in sizes.items() if n > 0}
        if not self.sizes:
            raise ValueError("all datasets are empty")
        self.policy = policy
        self._ids = sorted(self.sizes)
        self._pool = [(ds, i) for ds in self._ids for i in range(self.sizes[ds])]

    def batch(self, batch_size: int, batch_index: int) -> list[tuple[str, int]]:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        rng = rng_stream(self.policy.seed, "batch", self.policy.kind, batch_index)
        if self.policy.kind == "proportional":
            return self._proportional(batch_size, rng)
        return self._uniform_dataset(batch_size, rng)

    def _proportional(self, batch_size: int, rng: np.random.Generator) -> list[tuple[str, int]]:
        pool = self._pool
        replace = len(pool) < batch_size
        picked = rng.choice(len(pool), size=batch_size, replace=replace)
        return [pool[int(i)] for i in picked]

    def _uniform_dataset(self, batch_size: int, rng: np.random.Generator) -> list[tuple[str, int]]:
        total = sum(self.sizes.values())
        track_used = total >= batch_size
        used: set[tuple[str, int]] = set()
        refs: list[tuple[str, int]] = []
        for _ in range(batch_size):
            candidates = self._ids
            if track_used:
                candidates = [
                    ds
                    for ds in self._ids
                    if sum(1 for r in used if r[0] == ds) < self.sizes[ds]
                ]
            ds = candidates[int(rng.integers(len(candidates)))]
            if track_used:
                free = [i for i in range(self.sizes[ds]) if (ds, i) not in used]
                idx = free[int(rng.integers(len(free)))]
                used.add((ds, idx))
            else:
                idx = int(rng.integers(self.sizes[ds]))
            refs.append((ds, idx))
        return refs


def next_batch(
    datasets: dict[str, Sequence],
    batch_size: int,
    policy: SamplingPolicy,
    batch_index: int = 0,
) -> list[tuple[str, int]]:
    """One batch of example references, deterministic per (seed, batch index)."""
    sampler = BatchSampler({ds: len(items) for ds, items in datasets.items()}, policy)
    return sampler.batch(batch_size, batch_index)


@dataclass(frozen=True)
class JointTrace:
    """Per-step, per-dataset validation F1 matrix."""

    steps: tuple[int, ...]
    dataset_ids: tuple[str, ...]
    f1: np.ndarray  # shape (len(steps), len(dataset_ids)), values in [0, 1]

    def __post_init__(self) -> None:
        arr = np.asarray(self.f1, dtype=np.float64)
        if arr.shape != (len(self.steps), len(self.dataset_ids)):
            raise ValueError("f1 matrix shape does not match steps x datasets")
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("f1 values must lie in [0, 1]")
        object.__setattr__(self, "f1", arr)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "dataset_id", "f1"])
            for i, step in enumerate(self.steps):
                for j, ds in enumerate(self.dataset_ids):
                    writer.writerow([step, ds, repr(float(self.f1[i, j]))])

    @classmethod
    def read_csv(cls, path: str | Path) -> "JointTrace":
        rows: dict[int, dict[str, float]] = {}
        ds_order: list[str] = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                step = int(row["step"])
                ds = row["dataset_id"]
                rows.setdefault(step, {})[ds] = float(row["f1"])
                if ds not in ds_order:
                    ds_order.append(ds)
        steps = tuple(sorted(rows))
        f1 = np.array([[rows[s][ds] for ds in ds_order] for s in steps])
        return cls(steps=steps, dataset_ids=tuple(ds_order), f1=f1)


def select_joint_checkpoint(trace: JointTrace) -> int:
    """Step with the highest unweighted mean F1; ties break to the earlier step."""
    if len(trace.steps) == 0:
        raise ValueError("empty joint trace")
    order = np.argsort(trace.steps, kind="stable")
    means = trace.f1[order].mean(axis=1)
    return int(np.asarray(trace.steps)[order][int(np.argmax(means))])
