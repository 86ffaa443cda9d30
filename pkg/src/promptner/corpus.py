"""Annotated-sentence corpora: CoNLL/JSONL ingestion, writing, and splits.

Offsets everywhere are Unicode scalar-value indices (Python string indices),
never bytes. Loaders are pure and the resulting objects immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .rng import rng_stream
from .schema import Registry, RegistryError, SplitPolicy


class CorpusError(ValueError):
    """Malformed corpus input (carries file/line context where available)."""


@dataclass(frozen=True)
class Mention:
    """One entity occurrence: (type, surface text, [start, end))."""

    type_id: str
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class AnnotatedSentence:
    text: str
    mentions: tuple[Mention, ...]
    dataset_id: str

    def __post_init__(self) -> None:
        prev_end = 0
        last_start = -1
        for m in self.mentions:
            if not (0 <= m.start < m.end <= len(self.text)):
                raise CorpusError(
                    f"mention offsets [{m.start},{m.end}) out of bounds for "
                    f"text of length {len(self.text)}"
                )
            if self.text[m.start : m.end] != m.text:
                raise CorpusError(
                    f"mention text {m.text!r} does not match "
                    f"text[{m.start}:{m.end}]={self.text[m.start:m.end]!r}"
                )
            if m.start < last_start:
                raise CorpusError("mentions must be sorted by start offset")
            if m.start < prev_end:
                raise CorpusError(
                    f"overlapping mentions at offset {m.start} (flat NER only)"
                )
            last_start = m.start
            prev_end = m.end


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[AnnotatedSentence, ...]
    dev: tuple[AnnotatedSentence, ...]
    test: tuple[AnnotatedSentence, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        ids = [id(s) for part in (self.train, self.dev, self.test) for s in part]
        if len(ids) != len(set(ids)):
            raise CorpusError("splits must be disjoint as sentence instances")


def _sorted_mentions(mentions: Iterable[Mention]) -> tuple[Mention, ...]:
    return tuple(sorted(mentions, key=lambda m: (m.start, m.end)))


# ---------------------------------------------------------------------------
# CoNLL (two-column token/tag, BIO scheme)
# ---------------------------------------------------------------------------


def load_conll(
    path: str | Path,
    dataset_id: str,
    registry: Registry,
    joiner: str = "",
    strict: bool = False,
) -> list[AnnotatedSentence]:
    """Parse a BIO-tagged two-column file into annotated sentences.

    Tokens are joined with ``joiner`` (empty for Chinese-style corpora, a
    single space for whitespace-delimited ones) and mention offsets are
    computed against the joined text. In lenient mode (the default) an I- tag
    without a matching open run is coerced to B-; strict mode raises instead.
    """
    sentences: list[AnnotatedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush(line_no: int) -> None:
        if not tokens:
            return
        sentences.append(
            _conll_sentence(tokens, tags, dataset_id, registry, joiner, strict, line_no)
        )
        tokens.clear()
        tags.clear()

    with open(path, encoding="utf-8") as fh:
        line_no = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                flush(line_no)
                continue
            cols = line.split("\t") if "\t" in line else line.split(" ")
            cols = [c for c in cols if c != ""]
            if len(cols) < 2:
                raise CorpusError(f"{path}:{line_no}: expected 'token tag' columns")
            tokens.append(cols[0])
            tags.append(cols[-1])
        flush(line_no)
    return sentences


def _conll_sentence(
    tokens: Sequence[str],
    tags: Sequence[str],
    dataset_id: str,
    registry: Registry,
    joiner: str,
    strict: bool,
    line_no: int,
) -> AnnotatedSentence:
    starts: list[int] = []
    pos = 0
    for i, tok in enumerate(tokens):
        if i:
            pos += len(joiner)
        starts.append(pos)
        pos += len(tok)
    text = joiner.join(tokens)

    mentions: list[Mention] = []
    open_type: str | None = None
    open_start = 0
    open_end = 0

    def close() -> None:
        nonlocal open_type
        if open_type is not None:
            mentions.append(Mention(open_type, text[open_start:open_end], open_start, open_end))
            open_type = None

    for i, tag in enumerate(tags):
        if tag == "O":
            close()
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise CorpusError(f"near line {line_no}: malformed BIO tag {tag!r}")
        prefix, raw_type = tag[0], tag[2:]
        try:
            entity = registry.resolve_tag(dataset_id, raw_type)
        except RegistryError as exc:
            raise CorpusError(f"near line {line_no}: {exc}") from None
        if prefix == "I" and open_type == entity.id:
            open_end = starts[i] + len(tokens[i])
            continue
        if prefix == "I" and strict:
            raise CorpusError(
                f"near line {line_no}: I-{raw_type} without preceding B-{raw_type}"
            )
        # B-, or lenient coercion of a dangling I-
        close()
        open_type = entity.id
        open_start = starts[i]
        open_end = starts[i] + len(tokens[i])
    close()
    return AnnotatedSentence(text, _sorted_mentions(mentions), dataset_id)


# ---------------------------------------------------------------------------
# JSONL ({"text", "entities": [{"type", "start", "end"}]})
# ---------------------------------------------------------------------------


def load_jsonl(
    path: str | Path,
    dataset_id: str,
    registry: Registry,
    strict: bool = False,
) -> list[AnnotatedSentence]:
    """Load one JSON object per line; surface text derives from offsets."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from None
            sentences.append(_jsonl_sentence(obj, dataset_id, registry, strict, line_no))
    return sentences


def _resolve_type(registry: Registry, dataset_id: str, raw: str) -> str:
    ds = registry.dataset(dataset_id)
    if raw in ds.entity_ids:
        return raw
    return registry.resolve_tag(dataset_id, raw).id


def _jsonl_sentence(
    obj: dict,
    dataset_id: str,
    registry: Registry,
    strict: bool,
    line_no: int,
) -> AnnotatedSentence:
    text = obj.get("text")
    if not isinstance(text, str):
        raise CorpusError(f"line {line_no}: missing 'text' field")
    mentions: list[Mention] = []
    for ent in obj.get("entities", []):
        try:
            start, end = int(ent["start"]), int(ent["end"])
            type_id = _resolve_type(registry, dataset_id, str(ent["type"]))
        except (KeyError, RegistryError) as exc:
            raise CorpusError(f"line {line_no}: {exc}") from None
        if not (0 <= start < end <= len(text)):
            raise CorpusError(
                f"line {line_no}: offsets [{start},{end}) out of bounds for "
                f"text of length {len(text)}"
            )
        mentions.append(Mention(type_id, text[start:end], start, end))
    ordered = _sorted_mentions(mentions)
    kept: list[Mention] = []
    for m in ordered:
        if kept and m.start < kept[-1].end:
            if strict:
                raise CorpusError(f"line {line_no}: overlapping mentions at {m.start}")
            continue  # lenient: drop the later overlapping mention
        kept.append(m)
    return AnnotatedSentence(text, tuple(kept), dataset_id)


def write_jsonl(sentences: Iterable[AnnotatedSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            obj = {
                "text": s.text,
                "entities": [
                    {"type": m.type_id, "start": m.start, "end": m.end}
                    for m in s.mentions
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split(
    data: Sequence[AnnotatedSentence] | dict,
    policy: SplitPolicy,
    seed: int | None = None,
) -> CorpusSplit:
    """Build a train/dev/test split under the given policy.

    ``provided`` expects ``data`` to be a mapping with "train"/"dev"/"test"
    keys; ``sample`` draws dev then test without replacement from a flat
    sentence list, deterministically per seed, leaving the rest as train.
    """
    if policy.kind == "provided":
        if not isinstance(data, dict):
            raise CorpusError("policy 'provided' expects {'train','dev','test'} data")
        return CorpusSplit(
            train=tuple(data.get("train", ())),
            dev=tuple(data.get("dev", ())),
            test=tuple(data.get("test", ())),
            provenance="provided",
        )
    if isinstance(data, dict):
        raise CorpusError("policy 'sample' expects a flat sentence list")
    n = len(data)
    n_held = policy.n_dev + policy.n_test
    if n_held > n:
        raise CorpusError(
            f"cannot sample dev={policy.n_dev} + test={policy.n_test} from {n} sentences"
        )
    use_seed = policy.seed if seed is None else seed
    rng = rng_stream(use_seed, "corpus-split", n, policy.n_dev, policy.n_test)
    picked = rng.choice(n, size=n_held, replace=False)
    dev_idx = set(int(i) for i in picked[: policy.n_dev])
    test_idx = set(int(i) for i in picked[policy.n_dev :])
    train, dev, test = [], [], []
    for i, s in enumerate(data):
        (dev if i in dev_idx else test if i in test_idx else train).append(s)
    return CorpusSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=tuple(test),
        provenance=f"sample(n_dev={policy.n_dev},n_test={policy.n_test},seed={use_seed})",
    )
