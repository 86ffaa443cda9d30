"""Wire format between annotated sentences and the seq2seq model.

Source strings look like ``<entity>time<entity>location<text>...`` and
targets like ``((time):(tomorrow),(location):(zoo))``; a prompted type with
no mention in the text yields the literal payload ``NULL``. This module
serializes both directions, parses generated targets back into typed pairs
(strictly or leniently), and grounds generated surface strings to character
offsets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import AnnotatedSentence, Mention
from .schema import EntityType, Registry

ENTITY_SENTINEL = "<entity>"
TEXT_SENTINEL = "<text>"
NULL_PAYLOAD = "NULL"

# Characters the target grammar uses; training vocabularies must cover them
# even when no serialized example has been seen yet (e.g. during adaptation).
WIRE_LITERALS = "():," + NULL_PAYLOAD


class CodecError(ValueError):
    pass


class TargetParseError(CodecError):
    """Strict-mode grammar violation, with the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class TypedPair:
    """One (entity type, payload) item of a target; NULL marks absence."""

    type_id: str
    payload: str

    @property
    def is_null(self) -> bool:
        return self.payload == NULL_PAYLOAD


@dataclass(frozen=True)
class PromptedExample:
    prompts: tuple[str, ...]  # entity ids, in prompt order
    source: str
    target: str
    origin: AnnotatedSentence


@dataclass(frozen=True)
class ParseResult:
    pairs: tuple[TypedPair, ...]
    dropped: int  # pair-shaped fragments with unknown type names (lenient only)


@dataclass(frozen=True)
class GroundResult:
    mentions: tuple[Mention, ...]
    ungroundable: tuple[TypedPair, ...]


def _check_prompts(prompt_ids: Sequence[str], registry: Registry) -> list[EntityType]:
    if not prompt_ids:
        raise CodecError("prompt list must be non-empty")
    if len(set(prompt_ids)) != len(prompt_ids):
        raise CodecError(f"duplicate prompts in {list(prompt_ids)!r}")
    return [registry.entity(pid) for pid in prompt_ids]


def serialize_input(
    prompt_ids: Sequence[str],
    text: str,
    registry: Registry,
    bracket_names: bool = False,
) -> str:
    """Prefix ``text`` with one ``<entity>`` + prompt name per requested type.

    ``bracket_names`` renders names as ``<name>`` instead of bare (the two
    renderings both occur in the wild; bare is the default).
    """
    entities = _check_prompts(prompt_ids, registry)
    if ENTITY_SENTINEL in text or TEXT_SENTINEL in text:
        raise CodecError("raw text must not contain the reserved sentinels")
    parts = []
    for et in entities:
        name = f"<{et.prompt_name}>" if bracket_names else et.prompt_name
        parts.append(ENTITY_SENTINEL)
        parts.append(name)
    parts.append(TEXT_SENTINEL)
    parts.append(text)
    return "".join(parts)


def serialize_target(
    prompt_ids: Sequence[str],
    mentions: Sequence[Mention],
    registry: Registry,
    strict: bool = False,
) -> str:
    """Render the target: one pair per mention of each prompted type, in
    prompt-then-text order, with a single NULL pair for absent types.

    Mentions whose type is not prompted are ignored unless ``strict``.
    """
    entities = _check_prompts(prompt_ids, registry)
    prompted = set(prompt_ids)
    if strict:
        for m in mentions:
            if m.type_id not in prompted:
                raise CodecError(f"mention type {m.type_id!r} is not prompted")
    by_type: dict[str, list[Mention]] = {pid: [] for pid in prompt_ids}
    for m in sorted(mentions, key=lambda m: (m.start, m.end)):
        if m.type_id in by_type:
            by_type[m.type_id].append(m)
    pairs = []
    for et in entities:
        hits = by_type[et.id]
        if hits:
            pairs.extend(f"({et.prompt_name}):({m.text})" for m in hits)
        else:
            pairs.append(f"({et.prompt_name}):({NULL_PAYLOAD})")
    return "(" + ",".join(pairs) + ")"


def build_example(
    prompt_ids: Sequence[str],
    sentence: AnnotatedSentence,
    registry: Registry,
    bracket_names: bool = False,
) -> PromptedExample:
    return PromptedExample(
        prompts=tuple(prompt_ids),
        source=serialize_input(prompt_ids, sentence.text, registry, bracket_names),
        target=serialize_target(prompt_ids, sentence.mentions, registry),
        origin=sentence,
    )


# ---------------------------------------------------------------------------
# Parsing generated targets
# ---------------------------------------------------------------------------

# Pair-shaped anchor: "(" name "):(" — names never contain parens/colons/commas.
_ANCHOR_RE = re.compile(r"\(([^():,]+)\):\(")


def parse_target(
    generated: str,
    allowed_types: Sequence[EntityType],
    mode: str = "strict",
) -> ParseResult:
    """Recover typed pairs from a generated target string.

    Strict mode demands the exact grammar and raises
    :class:`TargetParseError` with a position on any violation. Lenient mode
    never raises: it scans for pair anchors, keeps pairs whose type name is
    known, and counts pair-shaped fragments with unknown names as dropped.
    """
    if not allowed_types:
        raise CodecError("allowed_types must be non-empty")
    if mode not in ("strict", "lenient"):
        raise CodecError(f"unknown parse mode {mode!r}")
    name_to_id = {et.prompt_name: et.id for et in allowed_types}

    anchors = list(_ANCHOR_RE.finditer(generated))
    segments: list[tuple[str, str, int]] = []  # (name, raw segment, anchor pos)
    for i, m in enumerate(anchors):
        seg_end = anchors[i + 1].start() if i + 1 < len(anchors) else len(generated)
        segments.append((m.group(1), generated[m.end() : seg_end], m.start()))

    if mode == "strict":
        return _parse_strict(generated, segments, name_to_id)

    pairs: list[TypedPair] = []
    dropped = 0
    for i, (name, segment, _pos) in enumerate(segments):
        last = i + 1 == len(segments)
        payload = _strip_segment(segment, last)
        if name in name_to_id:
            pairs.append(TypedPair(name_to_id[name], payload))
        else:
            dropped += 1
    return ParseResult(pairs=tuple(pairs), dropped=dropped)


def _strip_segment(segment: str, last: bool) -> str:
    # Between pairs the serialized form is "payload)," and the final pair
    # ends with "payload))"; salvage a bare ")" when the tail is malformed.
    if last:
        if segment.endswith("))"):
            return segment[:-2]
    elif segment.endswith("),"):
        return segment[:-2]
    if segment.endswith(")"):
        return segment[:-1]
    return segment


def _parse_strict(
    generated: str,
    segments: list[tuple[str, str, int]],
    name_to_id: dict[str, str],
) -> ParseResult:
    if not generated.startswith("("):
        raise TargetParseError("target must start with '('", 0)
    if not segments:
        raise TargetParseError("no pairs found", 1)
    first_pos = segments[0][2]
    if first_pos != 1:
        raise TargetParseError("expected pair immediately after '('", 1)
    pairs = []
    for i, (name, segment, pos) in enumerate(segments):
        if name not in name_to_id:
            raise TargetParseError(f"unknown type name {name!r}", pos + 1)
        last = i + 1 == len(segments)
        terminator = "))" if last else "),"
        if not segment.endswith(terminator):
            raise TargetParseError(
                f"pair for {name!r} must end with {terminator!r}",
                pos + len(name) + 3 + len(segment),
            )
        pairs.append(TypedPair(name_to_id[name], segment[:-2]))
    # Reassembling must reproduce the input exactly; anything else means the
    # anchor partition skipped stray characters.
    rebuilt = "(" + ",".join(
        f"({name}):({p.payload})" for (name, _s, _p), p in zip(segments, pairs)
    ) + ")"
    if rebuilt != generated:
        mismatch = next(
            (k for k, (a, b) in enumerate(zip(generated, rebuilt)) if a != b),
            min(len(generated), len(rebuilt)),
        )
        raise TargetParseError("target deviates from the pair grammar", mismatch)
    return ParseResult(pairs=tuple(pairs), dropped=0)


def target_is_valid(generated: str, allowed_types: Sequence[EntityType]) -> bool:
    try:
        parse_target(generated, allowed_types, mode="strict")
        return True
    except TargetParseError:
        return False


# ---------------------------------------------------------------------------
# Grounding payloads to offsets
# ---------------------------------------------------------------------------


def ground_pairs(text: str, pairs: Sequence[TypedPair]) -> GroundResult:
    """Ground each payload at its leftmost occurrence not already claimed.

    Payloads with no unclaimed occurrence are reported as ungroundable,
    never silently dropped. NULL pairs are a precondition violation.
    """
    claimed: list[tuple[int, int]] = []
    mentions: list[Mention] = []
    ungroundable: list[TypedPair] = []
    for pair in pairs:
        if pair.is_null:
            raise CodecError("NULL pairs must be filtered out before grounding")
        span = _leftmost_unclaimed(text, pair.payload, claimed)
        if span is None:
            ungroundable.append(pair)
        else:
            claimed.append(span)
            mentions.append(Mention(pair.type_id, pair.payload, span[0], span[1]))
    return GroundResult(mentions=tuple(mentions), ungroundable=tuple(ungroundable))


def _leftmost_unclaimed(
    text: str, payload: str, claimed: list[tuple[int, int]]
) -> tuple[int, int] | None:
    if not payload:
        return None
    start = 0
    while True:
        idx = text.find(payload, start)
        if idx < 0:
            return None
        span = (idx, idx + len(payload))
        if all(span[1] <= s or span[0] >= e for s, e in claimed):
            return span
        start = idx + 1


def strip_source(source: str) -> str:
    """Recover the raw text from a serialized source string."""
    idx = source.find(TEXT_SENTINEL)
    if idx < 0:
        raise CodecError("source string has no <text> sentinel")
    return source[idx + len(TEXT_SENTINEL) :]
