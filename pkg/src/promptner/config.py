"""Application configuration: JSON files plus dotted-key CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusSplit, load_conll, load_jsonl, split
from .model import ModelConfig, OptimizerConfig
from .schema import Registry, SplitPolicy
from .harness import resolve_registry
from .synth import default_corpora


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    registry: str = "bundled:synth"
    corpora: dict = field(
        default_factory=lambda: {"kind": "synthetic", "sizes": None, "seed": 7}
    )
    model: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    prompt_strategy: str = "dataset"
    k_max: int | None = None
    sampler_policy: str = "proportional"
    steps: int = 600
    eval_every: int = 150
    eval_beam: int = 5
    test_beam: int = 10
    eval_max_len: int | None = 80
    host: str = "127.0.0.1"
    port: int = 8000
    seed: int = 11

    def __post_init__(self) -> None:
        if self.eval_beam < 1 or self.test_beam < 1:
            raise ConfigError("beam widths must be >= 1")
        if self.registry not in ("bundled:synth", "bundled:main") and not Path(
            self.registry
        ).exists():
            raise ConfigError(f"registry path does not exist: {self.registry}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.model)

    def optimizer_config(self, steps: int | None = None) -> OptimizerConfig:
        cfg = dict(self.optimizer)
        if steps is not None:
            cfg["total_steps"] = steps
            cfg.setdefault("warmup_steps", min(200, max(1, steps // 10)))
            cfg["warmup_steps"] = min(cfg["warmup_steps"], steps)
        return OptimizerConfig(**cfg)

    def load_registry(self) -> Registry:
        return resolve_registry(self.registry)

    def load_corpora(self, registry: Registry) -> dict[str, CorpusSplit]:
        desc = self.corpora
        kind = desc.get("kind", "synthetic")
        if kind == "synthetic":
            return default_corpora(
                desc.get("sizes"), seed=desc.get("seed", 7), registry=registry
            )
        if kind in ("jsonl", "conll"):
            corpora: dict[str, CorpusSplit] = {}
            for ds, paths in desc["datasets"].items():
                loader = (
                    load_jsonl
                    if kind == "jsonl"
                    else lambda p, d, r: load_conll(p, d, r, joiner=desc.get("joiner", ""))
                )
                if "all" in paths:
                    sentences = loader(paths["all"], ds, registry)
                    corpora[ds] = split(sentences, registry.dataset(ds).split_policy)
                else:
                    parts = {
                        part: loader(paths[part], ds, registry)
                        for part in ("train", "dev", "test")
                        if part in paths
                    }
                    corpora[ds] = split(parts, SplitPolicy("provided"))
            return corpora
        raise ConfigError(f"unknown corpora kind {kind!r}")


def _set_dotted(obj: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = obj
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot override through non-object key {k!r}")
    cur[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override must look like key.path=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings stay strings
    return key.strip(), value


def load_app_config(path: str | Path | None, overrides: list[str] = ()) -> AppConfig:
    """Load a JSON config file (or defaults) and apply --set overrides."""
    obj: dict = {}
    if path is not None:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}"
            ) from None
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    for text in overrides or ():
        key, value = parse_override(text)
        _set_dotted(obj, key, value)
    try:
        return AppConfig(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad config key: {exc}") from None
