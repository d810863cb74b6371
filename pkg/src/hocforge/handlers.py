"""Request handlers: the service routes and the CLI both dispatch here."""

from __future__ import annotations

import dataclasses
from pathlib import Path

from . import datasetio, extraction, pipeline
from .errors import ConfigError
from .schemas import (
    ExtractRequest,
    ExtractResponse,
    IllumRequest,
    IllumResponse,
    ScoreProbeRequest,
    ScoreProbeResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)
from .scoring import ScorerClient


def run_extract(request: ExtractRequest) -> ExtractResponse:
    frames_dir = Path(request.frames_dir)
    out_dir = Path(request.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() == ".png")
    if not frames:
        raise ConfigError(f"no PNG frames found in {frames_dir}")

    written = []
    for frame_path in frames:
        frame = datasetio.read_png(frame_path)
        background = extraction.estimate_background(
            frame,
            border_fraction=request.border,
            tolerance_lo=request.lo,
            tolerance_hi=request.hi,
        )
        cutout = extraction.extract_cutout(frame, background, source_id=frame_path.stem)
        target = out_dir / f"{frame_path.stem}_cutout.png"
        datasetio.write_png(cutout.sprite, target, keep_alpha=True)
        written.append(str(target))
    return ExtractResponse(count=len(written), cutouts=written)


def run_synth(request: SynthRequest) -> SynthResponse:
    config = datasetio.load_config(request.config_path)
    if request.count is not None:
        config = dataclasses.replace(config, count=request.count)
    manifest = pipeline.generate_dataset(
        config,
        request.out_dir,
        workers=request.workers,
        debug_overlay=request.debug_overlay,
    )
    return SynthResponse(
        manifest_path=str(Path(request.out_dir) / "manifest.json"),
        image_count=len(manifest["images"]),
        annotation_count=len(manifest["annotations"]),
    )


def run_illum(request: IllumRequest) -> IllumResponse:
    from .color import BlurSpec, default_sigma, illum_transform_pair
    from .imaging import resize_bilinear

    image = datasetio.read_png(request.image)
    reference = datasetio.read_png(request.reference)
    reference = resize_bilinear(reference, image.width, image.height)
    sigma = request.sigma or default_sigma(image.width, image.height)
    transformed, _ = illum_transform_pair(image, reference, BlurSpec(sigma))
    datasetio.write_png(transformed, request.out, keep_alpha=False)
    return IllumResponse(out=request.out)


def run_validate(request: ValidateRequest) -> ValidateResponse:
    manifest = datasetio.read_manifest(request.manifest)
    report = datasetio.validate_manifest(manifest, request.images)
    return ValidateResponse(ok=report.ok, violations=report.violations)


def run_score_probe(request: ScoreProbeRequest) -> ScoreProbeResponse:
    png = Path(request.png).read_bytes()
    if ":" in request.scorer and " " not in request.scorer:
        client = ScorerClient(address=request.scorer)
    else:
        client = ScorerClient(command=request.scorer)
    with client:
        return ScoreProbeResponse(score=client.score(png))
