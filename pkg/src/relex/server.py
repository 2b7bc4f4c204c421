"""HTTP serving of the generation and embedding wire contracts.

Backends are pluggable: the mock fixture endpoint for generation and any
embedding provider (the deterministic test provider by default).  This is
the same contract the pipeline's client speaks, so offline experiments can
run against a real HTTP hop.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from relex.client import DEFAULT_MAX_NEW_TOKENS, GenerationEndpoint, GenerationRequest
from relex.embeddings import EmbeddingProvider
from relex.errors import ProtocolError, ValidationError


class GenerateIn(BaseModel):
    model: str
    prompt: str
    max_new_tokens: int = Field(default=DEFAULT_MAX_NEW_TOKENS, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)
    stop: list[str] = ["\n"]


class GenerateOut(BaseModel):
    text: str


class EmbedIn(BaseModel):
    model: str
    input: str


class EmbedOut(BaseModel):
    embedding: list[float]


def create_app(
    generation: GenerationEndpoint | None = None,
    embedding_provider: EmbeddingProvider | None = None,
) -> FastAPI:
    app = FastAPI(title="relex model server")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/generate", response_model=GenerateOut)
    def generate(body: GenerateIn):
        if generation is None:
            raise HTTPException(status_code=503, detail="no generation backend configured")
        request = GenerationRequest(
            model_id=body.model,
            prompt=body.prompt,
            max_new_tokens=body.max_new_tokens,
            temperature=body.temperature,
            stop_sequences=tuple(body.stop),
        )
        try:
            return GenerateOut(text=generation.complete(request))
        except ProtocolError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/embed", response_model=EmbedOut)
    def embed(body: EmbedIn):
        if embedding_provider is None:
            raise HTTPException(status_code=503, detail="no embedding backend configured")
        try:
            vector = embedding_provider.embed(body.input)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return EmbedOut(embedding=[float(x) for x in vector])

    return app
