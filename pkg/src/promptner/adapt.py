"""Prefix language modelling adaptation utilities.

Raw corpus text is split at a uniform random character position into a
(prefix, suffix) pair; the model learns to generate the suffix from the
prefix. Checkpoint selection minimizes the mean per-dataset validation loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .rng import rng_stream
from .sampler import BatchSampler, SamplingPolicy


@dataclass(frozen=True)
class PrefixLMExample:
    source: str  # prefix
    target: str  # suffix
    dataset_id: str

    def __post_init__(self) -> None:
        if not self.source or not self.target:
            raise ValueError("prefix and suffix must both be non-empty")


def split_at(text: str, index: int, dataset_id: str = "") -> PrefixLMExample:
    """Split ``text`` into (prefix, suffix) at a fixed character index."""
    if not (1 <= index <= len(text) - 1):
        raise ValueError(f"split index {index} out of range for length {len(text)}")
    return PrefixLMExample(text[:index], text[index:], dataset_id)


def prefix_split(
    text: str, rng: np.random.Generator, dataset_id: str = ""
) -> PrefixLMExample:
    """Split at an index drawn uniformly from {1 .. len(text)-1}."""
    if len(text) < 2:
        raise ValueError("text must be at least 2 characters long")
    index = int(rng.integers(1, len(text)))
    return split_at(text, index, dataset_id)


def build_adapt_stream(
    corpora: dict[str, Sequence[str]],
    batch_size: int,
    rng_seed: int,
) -> Iterator[list[PrefixLMExample]]:
    """Endless batch stream of prefix-LM examples over raw sentence texts.

    Sentence selection reuses the joint-training batch sampler; each selected
    text is then split at a fresh random position, so repeated visits to one
    sentence yield different (prefix, suffix) pairs.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not corpora or all(len(texts) == 0 for texts in corpora.values()):
        raise ValueError("at least one non-empty corpus required")
    usable = {
        ds: [t for t in texts if len(t) >= 2] for ds, texts in corpora.items()
    }
    usable = {ds: texts for ds, texts in usable.items() if texts}
    if not usable:
        raise ValueError("no text of length >= 2 in any corpus")
    sampler = BatchSampler(
        {ds: len(texts) for ds, texts in usable.items()},
        SamplingPolicy(kind="proportional", seed=rng_seed),
    )

    def generate() -> Iterator[list[PrefixLMExample]]:
        for batch_index in range(2**62):
            refs = sampler.batch(batch_size, batch_index)
            rng = rng_stream(rng_seed, "prefix-split", batch_index)
            yield [
                prefix_split(usable[ds][idx], rng, dataset_id=ds) for ds, idx in refs
            ]

    return generate()


@dataclass(frozen=True)
class AdaptTrace:
    """Per-step, per-dataset validation loss matrix."""

    steps: tuple[int, ...]
    dataset_ids: tuple[str, ...]
    losses: np.ndarray  # shape (len(steps), len(dataset_ids))

    def __post_init__(self) -> None:
        arr = np.asarray(self.losses, dtype=np.float64)
        if arr.shape != (len(self.steps), len(self.dataset_ids)):
            raise ValueError("loss matrix shape does not match steps x datasets")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("losses must be finite and non-negative")
        object.__setattr__(self, "losses", arr)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "dataset_id", "loss"])
            for i, step in enumerate(self.steps):
                for j, ds in enumerate(self.dataset_ids):
                    writer.writerow([step, ds, repr(float(self.losses[i, j]))])

    @classmethod
    def read_csv(cls, path: str | Path) -> "AdaptTrace":
        rows: dict[int, dict[str, float]] = {}
        ds_order: list[str] = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                step = int(row["step"])
                ds = row["dataset_id"]
                rows.setdefault(step, {})[ds] = float(row["loss"])
                if ds not in ds_order:
                    ds_order.append(ds)
        steps = tuple(sorted(rows))
        losses = np.array([[rows[s][ds] for ds in ds_order] for s in steps])
        return cls(steps=steps, dataset_ids=tuple(ds_order), losses=losses)


def select_adapt_checkpoint(trace: AdaptTrace) -> int:
    """Step with the lowest unweighted mean validation loss; ties break to
    the earlier step."""
    if len(trace.steps) == 0:
        raise ValueError("empty adaptation trace")
    order = np.argsort(trace.steps, kind="stable")
    means = trace.losses[order].mean(axis=1)
    return int(np.asarray(trace.steps)[order][int(np.argmin(means))])
