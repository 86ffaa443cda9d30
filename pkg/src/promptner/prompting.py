"""Prompt construction strategies for training and inference.

Training supports three setups: sample a random entity subset from the full
registry, add an exact-match sibling prompted with precisely the gold types,
or always prompt with the owning dataset's full entity list. Inference uses
the dataset's list, or an explicit caller-chosen list for on-demand queries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import CodecError, PromptedExample, build_example
from .corpus import AnnotatedSentence
from .schema import DatasetSpec, Registry

STRATEGY_KINDS = ("random", "random_plus_exact", "dataset_dependent")

# config-file spellings -> canonical kinds
STRATEGY_ALIASES = {
    "random": "random",
    "random_exact": "random_plus_exact",
    "random_plus_exact": "random_plus_exact",
    "dataset": "dataset_dependent",
    "dataset_dependent": "dataset_dependent",
}


@dataclass(frozen=True)
class PromptStrategy:
    kind: str
    k_max: int | None = None  # random kinds only; None = full registry size

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown prompt strategy {self.kind!r}")

    @classmethod
    def from_name(cls, name: str, k_max: int | None = None) -> "PromptStrategy":
        if name not in STRATEGY_ALIASES:
            raise ValueError(f"unknown prompt strategy {name!r}")
        return cls(STRATEGY_ALIASES[name], k_max)


def _resolve_k_max(strategy: PromptStrategy, registry: Registry) -> int:
    n = len(registry.entity_types)
    k_max = strategy.k_max if strategy.k_max is not None else n
    if not (1 <= k_max <= n):
        raise ValueError(f"k_max must be in [1, {n}], got {k_max}")
    return k_max


def _random_prompts(registry: Registry, k_max: int, rng: np.random.Generator) -> tuple[str, ...]:
    ids = [et.id for et in registry.entity_types]
    k = int(rng.integers(1, k_max + 1))
    picked = rng.choice(len(ids), size=k, replace=False)
    return tuple(ids[int(i)] for i in picked)


def _gold_prompts(sentence: AnnotatedSentence) -> tuple[str, ...]:
    seen: list[str] = []
    for m in sentence.mentions:  # mentions are sorted by start offset
        if m.type_id not in seen:
            seen.append(m.type_id)
    return tuple(seen)


def make_training_examples(
    sentence: AnnotatedSentence,
    dataset_spec: DatasetSpec,
    strategy: PromptStrategy,
    rng: np.random.Generator,
    registry: Registry,
) -> list[PromptedExample]:
    """Build the training example(s) for one sentence under a strategy.

    ``random`` yields one example with a uniform-size subset of the full
    registry; ``random_plus_exact`` adds a second example prompted with the
    distinct gold types (skipped for zero-mention sentences, whose gold
    prompt list would be empty); ``dataset_dependent`` always prompts with
    the dataset's full entity list in canonical order.
    """
    if sentence.dataset_id != dataset_spec.id:
        raise ValueError(
            f"sentence belongs to {sentence.dataset_id!r}, not {dataset_spec.id!r}"
        )
    if strategy.kind == "dataset_dependent":
        return [build_example(dataset_spec.entity_ids, sentence, registry)]

    k_max = _resolve_k_max(strategy, registry)
    examples = [build_example(_random_prompts(registry, k_max, rng), sentence, registry)]
    if strategy.kind == "random_plus_exact":
        gold = _gold_prompts(sentence)
        if gold:
            examples.append(build_example(gold, sentence, registry))
    return examples


def make_inference_prompts(
    registry: Registry,
    dataset_id: str | None = None,
    explicit: Sequence[str] | None = None,
) -> list[str]:
    """Prompt list for inference: a dataset's full entity list, or the
    caller's explicit on-demand selection (validated, order preserved)."""
    if (dataset_id is None) == (explicit is None):
        raise CodecError("pass exactly one of dataset_id or explicit types")
    if dataset_id is not None:
        return [et.id for et in registry.entities_of(dataset_id)]
    if not explicit:
        raise CodecError("explicit entity type list must be non-empty")
    for eid in explicit:
        registry.entity(eid)  # raises on unknown id
    if len(set(explicit)) != len(explicit):
        raise CodecError("explicit entity type list contains duplicates")
    return list(explicit)
