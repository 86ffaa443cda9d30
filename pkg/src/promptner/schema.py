"""Registry of datasets and entity types.

The registry is the single source of truth for which entity types exist,
how they are spelled inside prompts, and which datasets annotate them (and
under which corpus tag). Two registries ship with the package: the main one
covering the eight Chinese corpora (37 unique entity types) and a small
English one used by the synthetic corpora.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

GROUPS = ("name", "location", "organisation", "other")
GRANULARITIES = ("coarse", "fine", "ultra_fine")


class RegistryError(ValueError):
    """Raised for malformed or inconsistent registry documents."""


@dataclass(frozen=True)
class EntityType:
    """One recognisable entity type.

    ``prompt_name`` is the string rendered inside prompts and targets;
    ``dataset_tag`` is a representative tag as annotated in a source corpus
    (per-dataset tags live on :class:`DatasetSpec` because shared types are
    tagged differently across corpora). ``alias`` is a display-only
    translation, never used for serialization.
    """

    id: str
    dataset_tag: str
    prompt_name: str
    group: str
    granularity: str
    alias: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise RegistryError("entity type id must be non-empty")
        if self.group not in GROUPS:
            raise RegistryError(f"entity {self.id!r}: unknown group {self.group!r}")
        if self.granularity not in GRANULARITIES:
            raise RegistryError(
                f"entity {self.id!r}: unknown granularity {self.granularity!r}"
            )


@dataclass(frozen=True)
class SplitPolicy:
    kind: str  # "provided" | "sample"
    n_dev: int = 0
    n_test: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("provided", "sample"):
            raise RegistryError(f"unknown split policy kind {self.kind!r}")
        if self.kind == "sample" and (self.n_dev < 0 or self.n_test < 0):
            raise RegistryError("sample sizes must be non-negative")


@dataclass(frozen=True)
class DatasetSpec:
    """A dataset with an ordered entity list (the canonical prompt order)."""

    id: str
    entity_ids: tuple[str, ...]
    split_policy: SplitPolicy = field(default_factory=lambda: SplitPolicy("provided"))
    # corpus tag -> entity id, for tags that differ from the representative one
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.entity_ids:
            raise RegistryError(f"dataset {self.id!r}: entity_ids is empty")
        if len(set(self.entity_ids)) != len(self.entity_ids):
            raise RegistryError(f"dataset {self.id!r}: duplicate entity ids")


@dataclass(frozen=True)
class Registry:
    entity_types: tuple[EntityType, ...]
    datasets: tuple[DatasetSpec, ...]

    def __post_init__(self) -> None:
        seen_ids: set[str] = set()
        seen_names: set[str] = set()
        for et in self.entity_types:
            if et.id in seen_ids:
                raise RegistryError(f"duplicate entity id {et.id!r}")
            if et.prompt_name in seen_names:
                raise RegistryError(f"duplicate prompt name {et.prompt_name!r}")
            seen_ids.add(et.id)
            seen_names.add(et.prompt_name)
        referenced: set[str] = set()
        seen_datasets: set[str] = set()
        for ds in self.datasets:
            if ds.id in seen_datasets:
                raise RegistryError(f"duplicate dataset id {ds.id!r}")
            seen_datasets.add(ds.id)
            for eid in ds.entity_ids:
                if eid not in seen_ids:
                    raise RegistryError(
                        f"dataset {ds.id!r} references unknown entity id {eid!r}"
                    )
            referenced.update(ds.entity_ids)
            for tag, eid in ds.tags:
                if eid not in ds.entity_ids:
                    raise RegistryError(
                        f"dataset {ds.id!r}: tag {tag!r} maps outside the dataset"
                    )
        if self.datasets and referenced != seen_ids:
            orphans = sorted(seen_ids - referenced)
            raise RegistryError(f"entity types not used by any dataset: {orphans}")

    # -- lookups ---------------------------------------------------------

    def entity(self, entity_id: str) -> EntityType:
        try:
            return self._by_id[entity_id]
        except KeyError:
            raise RegistryError(f"unknown entity id {entity_id!r}") from None

    def dataset(self, dataset_id: str) -> DatasetSpec:
        try:
            return self._ds_by_id[dataset_id]
        except KeyError:
            raise RegistryError(f"unknown dataset id {dataset_id!r}") from None

    def entities_of(self, dataset_id: str) -> list[EntityType]:
        """Entity types of a dataset in declaration order (= prompt order)."""
        return [self.entity(eid) for eid in self.dataset(dataset_id).entity_ids]

    def resolve_tag(self, dataset_id: str, tag: str) -> EntityType:
        """Map a corpus annotation tag to its entity type, dataset-scoped."""
        ds = self.dataset(dataset_id)
        tag_map = dict(ds.tags)
        if tag in tag_map:
            return self.entity(tag_map[tag])
        for eid in ds.entity_ids:
            et = self.entity(eid)
            if tag == et.id or tag == et.dataset_tag:
                return et
        raise RegistryError(f"dataset {dataset_id!r}: unknown tag {tag!r}")

    @property
    def _by_id(self) -> dict[str, EntityType]:
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {et.id: et for et in self.entity_types}
            object.__setattr__(self, "_by_id_cache", cache)
        return cache

    @property
    def _ds_by_id(self) -> dict[str, DatasetSpec]:
        cache = self.__dict__.get("_ds_by_id_cache")
        if cache is None:
            cache = {ds.id: ds for ds in self.datasets}
            object.__setattr__(self, "_ds_by_id_cache", cache)
        return cache

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "entity_types": [
                {
                    "id": et.id,
                    "dataset_tag": et.dataset_tag,
                    "prompt_name": et.prompt_name,
                    "alias": et.alias,
                    "group": et.group,
                    "granularity": et.granularity,
                }
                for et in self.entity_types
            ],
            "datasets": [
                {
                    "id": ds.id,
                    "entity_ids": list(ds.entity_ids),
                    "split_policy": _policy_to_dict(ds.split_policy),
                    **({"tags": dict(ds.tags)} if ds.tags else {}),
                }
                for ds in self.datasets
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def _policy_to_dict(policy: SplitPolicy) -> dict:
    if policy.kind == "provided":
        return {"kind": "provided"}
    return {
        "kind": "sample",
        "n_dev": policy.n_dev,
        "n_test": policy.n_test,
        "seed": policy.seed,
    }


def _policy_from_dict(obj: dict) -> SplitPolicy:
    kind = obj.get("kind")
    if kind == "provided":
        return SplitPolicy("provided")
    if kind == "sample":
        return SplitPolicy(
            "sample",
            n_dev=int(obj.get("n_dev", 0)),
            n_test=int(obj.get("n_test", 0)),
            seed=int(obj.get("seed", 0)),
        )
    raise RegistryError(f"unknown split policy {obj!r}")


def registry_from_dict(obj: dict) -> Registry:
    try:
        entity_types = tuple(
            EntityType(
                id=et["id"],
                dataset_tag=et["dataset_tag"],
                prompt_name=et["prompt_name"],
                alias=et.get("alias"),
                group=et["group"],
                granularity=et["granularity"],
            )
            for et in obj["entity_types"]
        )
        datasets = tuple(
            DatasetSpec(
                id=ds["id"],
                entity_ids=tuple(ds["entity_ids"]),
                split_policy=_policy_from_dict(ds.get("split_policy", {"kind": "provided"})),
                tags=tuple(sorted(ds.get("tags", {}).items())),
            )
            for ds in obj["datasets"]
        )
    except KeyError as exc:
        raise RegistryError(f"registry document missing field: {exc}") from None
    return Registry(entity_types=entity_types, datasets=datasets)


def loads_registry(text: str) -> Registry:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RegistryError(
            f"registry parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(obj, dict):
        raise RegistryError("registry document must be a JSON object")
    return registry_from_dict(obj)


def load_registry(path: str | Path) -> Registry:
    """Load and validate a registry JSON document (UTF-8, no BOM)."""
    return loads_registry(Path(path).read_text(encoding="utf-8"))


def _bundled(name: str) -> Registry:
    text = resources.files("promptner.data").joinpath(name).read_text(encoding="utf-8")
    return loads_registry(text)


def main_registry() -> Registry:
    """The eight-corpus registry with its 37 entity types."""
    return _bundled("registry.json")


def synth_registry() -> Registry:
    """Registry backing the bundled synthetic corpora (English prompt names)."""
    return _bundled("synth_registry.json")
