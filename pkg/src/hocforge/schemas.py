"""Pydantic request/response models shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field


class ExtractRequest(BaseModel):
    frames_dir: str
    out_dir: str
    lo: float = Field(default=0.08, gt=0)
    hi: float = Field(default=0.25, gt=0)
    border: float = Field(default=0.05, gt=0, lt=0.5)


class ExtractResponse(BaseModel):
    count: int
    cutouts: List[str]


class SynthRequest(BaseModel):
    config_path: str
    out_dir: str
    count: Optional[int] = None  # overrides config.count
    workers: int = 1
    debug_overlay: bool = False


class SynthResponse(BaseModel):
    manifest_path: str
    image_count: int
    annotation_count: int


class IllumRequest(BaseModel):
    image: str
    reference: str
    out: str
    sigma: Optional[float] = Field(default=None, gt=0)


class IllumResponse(BaseModel):
    out: str


class ValidateRequest(BaseModel):
    manifest: str
    images: str


class ValidateResponse(BaseModel):
    ok: bool
    violations: List[str]


class ScoreProbeRequest(BaseModel):
    scorer: str  # command line or host:port
    png: str


class ScoreProbeResponse(BaseModel):
    score: float


class HealthResponse(BaseModel):
    status: str = "ok"
