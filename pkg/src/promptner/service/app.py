"""HTTP service for on-demand NER.

Endpoints:
    GET  /api/health        -> {"status": "ok"}
    GET  /api/entity-types  -> entity list with group/granularity metadata
    POST /api/ner           -> extract the requested entity types from text

Requests are stateless; the loaded checkpoint is immutable and shared across
concurrent handlers. Hot reload swaps the whole bundle atomically; requests
that arrive while no bundle is available get a 503.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from ..model import Seq2Seq, load_checkpoint, model_from_checkpoint
from ..pipeline import RequestError, run_ner
from ..schema import Registry
from ..harness import resolve_registry


@dataclass(frozen=True)
class ModelBundle:
    model: Seq2Seq
    registry: Registry
    eval_beam: int = 5
    test_beam: int = 10


class ModelHolder:
    """Read-mostly guard around the served bundle; swap is atomic."""

    def __init__(self, bundle: Optional[ModelBundle] = None):
        self._lock = threading.Lock()
        self._bundle = bundle

    def get(self) -> ModelBundle:
        bundle = self._bundle
        if bundle is None:
            raise HTTPException(status_code=503, detail="model checkpoint not loaded")
        return bundle

    def swap(self, bundle: Optional[ModelBundle]) -> None:
        with self._lock:
            self._bundle = bundle

    def reload(self, checkpoint_path: str | Path, registry: Registry | str,
               eval_beam: int = 5, test_beam: int = 10) -> None:
        """Load a new checkpoint, then swap it in; serving continues on the
        old bundle until the new one is ready."""
        if isinstance(registry, str):
            registry = resolve_registry(registry)
        ckpt = load_checkpoint(checkpoint_path)
        model = model_from_checkpoint(ckpt)
        self.swap(ModelBundle(model, registry, eval_beam, test_beam))


class MentionOut(BaseModel):
    type: str
    text: str
    start: Optional[int] = None  # absent = payload could not be grounded
    end: Optional[int] = None


class NerRequest(BaseModel):
    text: str
    entity_types: list[str]
    decode_mode: Literal["greedy", "beam"] = "beam"
    beam_width: Optional[int] = Field(default=None, ge=1)


class NerResponse(BaseModel):
    mentions: list[MentionOut]
    null_types: list[str]
    raw_target: str
    parse_valid: bool


class EntityTypeOut(BaseModel):
    id: str
    dataset_tag: str
    prompt_name: str
    alias: Optional[str] = None
    group: str
    granularity: str
    datasets: list[str]


class HealthOut(BaseModel):
    status: str


def create_app(holder: ModelHolder, allow_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="promptner", docs_url="/api/docs", openapi_url="/api/openapi.json")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=allow_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.holder = holder

    @app.get("/api/health", response_model=HealthOut)
    def health() -> HealthOut:
        return HealthOut(status="ok")

    @app.get("/api/entity-types", response_model=list[EntityTypeOut])
    def entity_types() -> list[EntityTypeOut]:
        bundle = holder.get()
        registry = bundle.registry
        containing: dict[str, list[str]] = {et.id: [] for et in registry.entity_types}
        for ds in registry.datasets:
            for eid in ds.entity_ids:
                containing[eid].append(ds.id)
        return [
            EntityTypeOut(
                id=et.id,
                dataset_tag=et.dataset_tag,
                prompt_name=et.prompt_name,
                alias=et.alias,
                group=et.group,
                granularity=et.granularity,
                datasets=containing[et.id],
            )
            for et in registry.entity_types
        ]

    @app.post("/api/ner", response_model=NerResponse)
    def ner(request: NerRequest) -> NerResponse:
        bundle = holder.get()
        width = request.beam_width or bundle.test_beam
        try:
            outcome = run_ner(
                bundle.model,
                bundle.registry,
                request.text,
                request.entity_types,
                mode=request.decode_mode,
                width=width,
            )
        except RequestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        if outcome.unparseable:
            raise HTTPException(
                status_code=422,
                detail={
                    "message": "generation was unparseable even leniently",
                    "raw_target": outcome.raw_target,
                    "parse_valid": False,
                },
            )
        mentions = [
            MentionOut(type=m.type_id, text=m.text, start=m.start, end=m.end)
            for m in outcome.mentions
        ]
        mentions.extend(
            MentionOut(type=p.type_id, text=p.payload) for p in outcome.ungrounded
        )
        return NerResponse(
            mentions=mentions,
            null_types=list(outcome.null_types),
            raw_target=outcome.raw_target,
            parse_valid=outcome.parse_valid,
        )

    return app
