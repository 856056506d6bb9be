"""HTTP service exposing local backends over the wire protocol.

Useful for exercising the HTTP clients end to end, or for fronting a real
model with the same three endpoints.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .backends import (
    BackendInputError,
    Embedder,
    GenParams,
    Generator,
    HashEmbedder,
    MockGenerator,
    MockScorer,
    Scorer,
)
from .schemas import (
    EmbedRequest,
    EmbedResponse,
    GenerateRequest,
    GenerateResponse,
    ScoreRequest,
    ScoreResponse,
)


def create_app(
    generator: Generator | None = None,
    scorer: Scorer | None = None,
    embedder: Embedder | None = None,
) -> FastAPI:
    generator = generator or MockGenerator()
    scorer = scorer or MockScorer()
    embedder = embedder or HashEmbedder()
    app = FastAPI(title="rigkit backends")

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest) -> GenerateResponse:
        params = GenParams(max_tokens=req.max_tokens, temperature=req.temperature, seed=req.seed)
        try:
            return GenerateResponse(text=generator.generate(req.prompt, params))
        except BackendInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        try:
            return ScoreResponse(score=scorer.plausibility(req.statement))
        except BackendInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest) -> EmbedResponse:
        try:
            return EmbedResponse(vector=[float(x) for x in embedder.embed(req.text)])
        except BackendInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    return app
