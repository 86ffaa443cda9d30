"""On-demand inference pipeline shared by the HTTP service and the CLI.

serialize_input -> decode -> parse_target(lenient) -> ground_pairs. The
result carries grounded mentions (with offsets), payloads that could not be
grounded, the prompted types that came back NULL, and the raw generated
string for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .codec import (
    CodecError,
    TypedPair,
    ground_pairs,
    parse_target,
    serialize_input,
    target_is_valid,
)
from .corpus import Mention
from .model import Seq2Seq
from .model.decode import decode
from .schema import Registry, RegistryError


class RequestError(ValueError):
    """Invalid caller input (maps to HTTP 400)."""


@dataclass(frozen=True)
class NerOutcome:
    mentions: tuple[Mention, ...]
    ungrounded: tuple[TypedPair, ...]
    null_types: tuple[str, ...]
    raw_target: str
    parse_valid: bool
    pairs_parsed: int
    dropped_pairs: int

    @property
    def unparseable(self) -> bool:
        return self.pairs_parsed == 0


def run_ner(
    model: Seq2Seq,
    registry: Registry,
    text: str,
    entity_ids: Sequence[str],
    mode: str = "beam",
    width: int = 10,
    max_len: int | None = None,
) -> NerOutcome:
    """Extract the requested entity types from ``text``.

    Raises :class:`RequestError` for empty text, an empty or unknown entity
    list, or text the model cannot accept.
    """
    if not text:
        raise RequestError("text must be non-empty")
    if not entity_ids:
        raise RequestError("entity_types must be non-empty")
    if len(set(entity_ids)) != len(entity_ids):
        raise RequestError("entity_types contains duplicates")
    try:
        entities = [registry.entity(eid) for eid in entity_ids]
        source = serialize_input(list(entity_ids), text, registry)
    except (RegistryError, CodecError) as exc:
        raise RequestError(str(exc)) from None
    src_ids = model.vocab.encode(source)
    if len(src_ids) > model.config.max_source_len:
        raise RequestError(
            f"prompted input is {len(src_ids)} tokens; the model accepts at most "
            f"{model.config.max_source_len}"
        )
    raw = decode(model, src_ids, mode=mode, width=width, max_len=max_len)
    result = parse_target(raw, entities, mode="lenient")
    null_ids = {p.type_id for p in result.pairs if p.is_null}
    null_types = tuple(eid for eid in entity_ids if eid in null_ids)
    positive = [p for p in result.pairs if not p.is_null]
    grounded = ground_pairs(text, positive)
    return NerOutcome(
        mentions=grounded.mentions,
        ungrounded=grounded.ungroundable,
        null_types=null_types,
        raw_target=raw,
        parse_valid=target_is_valid(raw, entities),
        pairs_parsed=len(result.pairs),
        dropped_pairs=result.dropped,
    )
