"""FastAPI service exposing the generation pipeline to HTTP clients."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import handlers
from .errors import HocforgeError
from .schemas import (
    ExtractRequest,
    ExtractResponse,
    HealthResponse,
    IllumRequest,
    IllumResponse,
    ScoreProbeRequest,
    ScoreProbeResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)

app = FastAPI(title="hocforge", version="0.1.0")


@app.exception_handler(HocforgeError)
async def hocforge_error_handler(_: Request, exc: HocforgeError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.get("/v1/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse()


@app.post("/v1/extract", response_model=ExtractResponse)
def extract(request: ExtractRequest) -> ExtractResponse:
    return handlers.run_extract(request)


@app.post("/v1/synth", response_model=SynthResponse)
def synth(request: SynthRequest) -> SynthResponse:
    return handlers.run_synth(request)


@app.post("/v1/illum", response_model=IllumResponse)
def illum(request: IllumRequest) -> IllumResponse:
    return handlers.run_illum(request)


@app.post("/v1/validate", response_model=ValidateResponse)
def validate(request: ValidateRequest) -> ValidateResponse:
    return handlers.run_validate(request)


@app.post("/v1/score-probe", response_model=ScoreProbeResponse)
def score_probe(request: ScoreProbeRequest) -> ScoreProbeResponse:
    return handlers.run_score_probe(request)
