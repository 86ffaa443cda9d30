"""Synthetic desk-scale corpora built from slot-filling template grammars.

Three grammars share the entity types {name, location, time} and add one
private type each (company / product / profession), so joint training can
exploit cross-corpus label overlap while each corpus keeps something unique.
A few surface words are deliberately ambiguous across grammars ("apple" is a
company in the news grammar but a product in the shop grammar) to exercise
prompt-conditioned disambiguation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import AnnotatedSentence, CorpusSplit, Mention, split
from .rng import rng_stream
from .schema import Registry, RegistryError, SplitPolicy, synth_registry

_SLOT_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class TemplateGrammar:
    """Sentence templates plus slot -> (entity id, filler words)."""

    dataset_id: str
    templates: tuple[str, ...]
    slots: dict[str, tuple[str, tuple[str, ...]]]

    def validate(self, registry: Registry) -> None:
        for slot, (entity_id, words) in self.slots.items():
            registry.entity(entity_id)  # raises RegistryError on unknown id
            if not words:
                raise RegistryError(f"slot {slot!r} has an empty word list")
        for tpl in self.templates:
            for slot in _SLOT_RE.findall(tpl):
                if slot not in self.slots:
                    raise RegistryError(f"template {tpl!r} uses unknown slot {slot!r}")


def synth_generate(
    grammar: TemplateGrammar,
    n: int,
    seed: int | np.random.Generator,
    registry: Registry | None = None,
) -> list[AnnotatedSentence]:
    """Generate ``n`` annotated sentences, a pure function of (grammar, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    grammar.validate(registry if registry is not None else synth_registry())
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else rng_stream(seed, "synth", grammar.dataset_id)
    )
    sentences = []
    for _ in range(n):
        tpl = grammar.templates[int(rng.integers(len(grammar.templates)))]
        sentences.append(_fill(grammar, tpl, rng))
    return sentences


def _fill(grammar: TemplateGrammar, template: str, rng: np.random.Generator) -> AnnotatedSentence:
    parts: list[str] = []
    mentions: list[Mention] = []
    pos = 0
    cursor = 0
    for match in _SLOT_RE.finditer(template):
        literal = template[cursor : match.start()]
        parts.append(literal)
        pos += len(literal)
        entity_id, words = grammar.slots[match.group(1)]
        word = words[int(rng.integers(len(words)))]
        parts.append(word)
        mentions.append(Mention(entity_id, word, pos, pos + len(word)))
        pos += len(word)
        cursor = match.end()
    parts.append(template[cursor:])
    text = "".join(parts)
    ordered = tuple(sorted(mentions, key=lambda m: m.start))
    return AnnotatedSentence(text, ordered, grammar.dataset_id)


# ---------------------------------------------------------------------------
# Default grammars
# ---------------------------------------------------------------------------

# wide filler pools: with only a handful of fillers per type a small model
# memorizes type vocabularies instead of learning to copy from the source
_NAMES = ("Tom", "Anna", "Wei", "Omar", "Lena", "Ravi", "Maria", "Ivan",
          "Sofia", "Chen", "Noor", "Felix", "Emma", "Igor", "Tara", "Hugo",
          "Nina", "Raj", "Elif", "Musa", "Dana", "Kofi", "Lars", "Rosa")
_LOCATIONS = ("zoo", "park", "Berlin", "Paris", "museum", "harbour", "Tokyo",
              "market", "library", "Cairo", "stadium", "Oslo", "cafe",
              "beach", "Lima", "forest", "temple", "Quito", "bridge",
              "Accra", "tower", "Delhi", "plaza", "Seoul")
_TIMES = ("tomorrow", "today", "Monday", "Tuesday", "tonight", "Friday",
          "June", "March", "noon", "midnight", "Sunday", "April", "dawn",
          "dusk", "winter", "spring")
_COMPANIES = ("Acme", "Globex", "apple", "Initech", "Hooli", "Vandelay",
              "Cyberdyne", "Umbrella", "Soylent", "Wonka", "Tyrell",
              "Aperture", "Oscorp", "Monarch", "Sirius", "Duff")
_PRODUCTS = ("laptop", "kettle", "apple", "drone", "camera", "scooter",
             "blender", "guitar", "tablet", "lamp", "helmet", "razor",
             "toaster", "monitor", "speaker", "padlock")
_PROFESSIONS = ("engineer", "teacher", "doctor", "pilot", "chef", "lawyer",
                "nurse", "architect", "dentist", "plumber", "barista",
                "tailor", "florist", "butcher", "glazier", "surveyor")


def default_grammars() -> list[TemplateGrammar]:
    news = TemplateGrammar(
        dataset_id="synth_news",
        templates=(
            "{name} will go to the {location} {time}.",
            "{name} visited {location} {time}.",
            "{company} opened an office in {location}.",
            "{name} joined {company} {time}.",
            "{company} hired {name} in {location}.",
            "Reporters saw {name} near the {location} {time}.",
            "{company} shares fell {time}.",
            "{name} spoke at the {location}.",
        ),
        slots={
            "name": ("name", _NAMES),
            "location": ("location", _LOCATIONS),
            "time": ("time", _TIMES),
            "company": ("company", _COMPANIES),
        },
    )
    shop = TemplateGrammar(
        dataset_id="synth_shop",
        templates=(
            "{name} bought a {product} in {location} {time}.",
            "The {product} arrived {time}.",
            "{name} returned the {product} at the {location}.",
            "{name} ordered a {product} {time}.",
            "A {product} was on sale in {location}.",
            "{name} reviewed the {product} {time}.",
        ),
        slots={
            "name": ("name", _NAMES),
            "location": ("location", _LOCATIONS),
            "time": ("time", _TIMES),
            "product": ("product", _PRODUCTS),
        },
    )
    work = TemplateGrammar(
        dataset_id="synth_work",
        templates=(
            "{name} works as a {profession} in {location}.",
            "{name} became a {profession} {time}.",
            "The {profession} met {name} at the {location}.",
            "{name} trained as a {profession}.",
            "A {profession} from {location} spoke {time}.",
        ),
        slots={
            "name": ("name", _NAMES),
            "location": ("location", _LOCATIONS),
            "time": ("time", _TIMES),
            "profession": ("profession", _PROFESSIONS),
        },
    )
    return [news, shop, work]


DEFAULT_SIZES = {"synth_news": 520, "synth_shop": 520, "synth_work": 200}


def default_corpora(
    sizes: dict[str, int] | None = None,
    seed: int = 7,
    registry: Registry | None = None,
) -> dict[str, CorpusSplit]:
    """Generate and split the three default corpora, deterministically per seed."""
    registry = registry if registry is not None else synth_registry()
    sizes = dict(DEFAULT_SIZES if sizes is None else sizes)
    corpora: dict[str, CorpusSplit] = {}
    for grammar in default_grammars():
        if grammar.dataset_id not in sizes:
            continue
        n = sizes[grammar.dataset_id]
        sentences = synth_generate(grammar, n, rng_stream(seed, "synth", grammar.dataset_id))
        policy = registry.dataset(grammar.dataset_id).split_policy
        if policy.kind == "sample" and policy.n_dev + policy.n_test > n // 2:
            # clamp held-out sizes so tiny corpora still split sensibly
            held = max(1, n // 4)
            policy = SplitPolicy("sample", n_dev=held, n_test=held, seed=policy.seed)
        corpora[grammar.dataset_id] = split(sentences, policy, seed=seed)
    return corpora
