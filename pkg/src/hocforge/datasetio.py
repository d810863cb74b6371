"""Annotation serialization, PNG I/O, config parsing, and manifest checks.

The manifest is COCO-compatible JSON with two extension fields per
annotation (occlusion_fraction, excluded) and an info block recording the
export threshold.  Serialization is canonical: sorted keys, floats printed
with six decimal digits, so equal manifests are byte-equal.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .imaging import Cutout, ImageBuffer

# ---------------------------------------------------------------------------
# Run-length encoding (uncompressed COCO convention: column-major, zeros first)


def encode_rle(mask: np.ndarray) -> dict:
    """Encode a binary bitmap as uncompressed column-major RLE counts."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValueError("mask is empty")
    flat = mask.ravel(order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate(([0], change, [flat.size])))
    counts = runs.tolist()
    if flat[0] == 1:  # counts always start with the number of zeros
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    """Inverse of encode_rle."""
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE counts sum to {pos}, expected {h * w}")
    return flat.reshape((h, w), order="F")


# ---------------------------------------------------------------------------
# Canonical JSON


def _canonical(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError(f"non-finite float {value!r} in manifest")
        return f"{value:.6f}"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_canonical(v)}" for k, v in items) + "}"
    raise TypeError(f"unsupported manifest value type {type(obj)!r}")


def canonical_json(obj) -> str:
    return _canonical(obj)


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(canonical_json(manifest) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# PNG I/O (8-bit only; float channels quantized here and nowhere else)


def to_uint8(image: ImageBuffer) -> np.ndarray:
    return np.round(np.clip(image.data, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(image: ImageBuffer, path, keep_alpha: bool = True) -> None:
    arr = to_uint8(image)
    if keep_alpha:
        Image.fromarray(arr, mode="RGBA").save(path, format="PNG")
    else:
        Image.fromarray(arr[:, :, :3], mode="RGB").save(path, format="PNG")


def png_bytes(image: ImageBuffer, keep_alpha: bool = False) -> bytes:
    """Encode an image as in-memory PNG (RGB by default, for scorer crops)."""
    import io

    arr = to_uint8(image)
    buf = io.BytesIO()
    if keep_alpha:
        Image.fromarray(arr, mode="RGBA").save(buf, format="PNG")
    else:
        Image.fromarray(arr[:, :, :3], mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def read_png(path) -> ImageBuffer:
    with Image.open(path) as img:
        img = img.convert("RGBA")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def load_cutout_library(directory) -> list:
    """Load every PNG in a directory as a cutout, in filename order."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ConfigError(f"no PNG cutouts found in {directory}")
    library = []
    for p in paths:
        image = read_png(p)
        library.append(Cutout(sprite=image, source_id=p.stem))
    return library


# ---------------------------------------------------------------------------
# Configuration

DEFAULT_N_RANGE = (10, 30)
DEFAULT_GAMMA_RANGE = (0.8, 1.2)
DEFAULT_THETA_RANGE = (0.0, 360.0)
DEFAULT_OCCLUSION_EXPORT_MAX = 0.8

SEED_ENV_VAR = "HOCFORGE_SEED"

_TOP_LEVEL_KEYS = {
    "canvas",
    "library_dir",
    "n_range",
    "gamma_range",
    "theta_range",
    "bo",
    "scorer",
    "illumination",
    "occlusion_export_max",
    "seed",
    "count",
    "category",
}
_BO_KEYS = {"budget", "n_init", "xi", "n_restarts"}
_ILLUM_KEYS = {"enabled", "sigma", "reference_pool"}
_SCORER_KEYS = {"kind", "command", "address"}


def _require(condition: bool, fieldname: str, constraint: str) -> None:
    if not condition:
        raise ConfigError(f"{fieldname}: {constraint}")


def _check_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")


def parse_config(raw: dict) -> "SynthesisConfig":
    """Validate a raw config mapping and fill documented defaults."""
    from .pipeline import IlluminationConfig, ScorerSpec, SynthesisConfig
    from .bayesopt import BOConfig

    _require(isinstance(raw, dict), "config", "must be a JSON object")
    _check_keys(raw, _TOP_LEVEL_KEYS, "config")
    _require("canvas" in raw, "canvas", "is required")
    _require("library_dir" in raw, "library_dir", "is required")

    canvas = raw["canvas"]
    _require(
        isinstance(canvas, (list, tuple)) and len(canvas) == 2,
        "canvas",
        "must be [width, height]",
    )
    width, height = int(canvas[0]), int(canvas[1])
    _require(width >= 1 and height >= 1, "canvas", "dimensions must be >= 1")

    n_range = tuple(raw.get("n_range", DEFAULT_N_RANGE))
    _require(len(n_range) == 2, "n_range", "must be [n_min, n_max]")
    n_min, n_max = int(n_range[0]), int(n_range[1])
    _require(n_min >= 1, "n_range", "n_min must be >= 1")
    _require(n_min <= n_max, "n_range", "n_min must be <= n_max")

    gamma_range = tuple(float(v) for v in raw.get("gamma_range", DEFAULT_GAMMA_RANGE))
    _require(len(gamma_range) == 2, "gamma_range", "must be [lo, hi]")
    _require(gamma_range[0] > 0, "gamma_range", "lo must be > 0")
    _require(gamma_range[0] <= gamma_range[1], "gamma_range", "lo must be <= hi")

    theta_range = tuple(float(v) for v in raw.get("theta_range", DEFAULT_THETA_RANGE))
    _require(len(theta_range) == 2, "theta_range", "must be [lo, hi]")
    _require(
        0.0 <= theta_range[0] < theta_range[1] <= 360.0,
        "theta_range",
        "must satisfy 0 <= lo < hi <= 360",
    )

    bo_raw = raw.get("bo", {})
    _require(isinstance(bo_raw, dict), "bo", "must be an object")
    _check_keys(bo_raw, _BO_KEYS, "bo")
    try:
        bo = BOConfig(
            budget=int(bo_raw.get("budget", 30)),
            n_init=int(bo_raw.get("n_init", 10)),
            xi=float(bo_raw.get("xi", 0.01)),
            n_restarts=int(bo_raw.get("n_restarts", 16)),
        )
    except ValueError as exc:
        raise ConfigError(f"bo: {exc}") from exc

    scorer_raw = raw.get("scorer", "heuristic")
    if isinstance(scorer_raw, str):
        scorer_raw = {"kind": scorer_raw}
    _require(isinstance(scorer_raw, dict), "scorer", "must be a string or object")
    _check_keys(scorer_raw, _SCORER_KEYS, "scorer")
    kind = scorer_raw.get("kind", "heuristic")
    _require(
        kind in ("heuristic", "external", "random"),
        "scorer.kind",
        "must be heuristic, external, or random",
    )
    command = scorer_raw.get("command")
    address = scorer_raw.get("address")
    if kind == "external":
        _require(
            bool(command) != bool(address),
            "scorer",
            "external scorer needs exactly one of command or address",
        )
    scorer = ScorerSpec(kind=kind, command=command, address=address)

    illum_raw = raw.get("illumination", {})
    _require(isinstance(illum_raw, dict), "illumination", "must be an object")
    _check_keys(illum_raw, _ILLUM_KEYS, "illumination")
    sigma = illum_raw.get("sigma")
    if sigma is not None:
        sigma = float(sigma)
        _require(sigma > 0, "illumination.sigma", "must be > 0")
    illumination = IlluminationConfig(
        enabled=bool(illum_raw.get("enabled", False)),
        sigma=sigma,
        reference_pool=[str(p) for p in illum_raw.get("reference_pool", [])],
    )
    if illumination.enabled:
        _require(
            len(illumination.reference_pool) > 0,
            "illumination.reference_pool",
            "must be non-empty when illumination is enabled",
        )

    occlusion_export_max = float(
        raw.get("occlusion_export_max", DEFAULT_OCCLUSION_EXPORT_MAX)
    )
    _require(
        0.0 < occlusion_export_max <= 1.0,
        "occlusion_export_max",
        "must be in (0, 1]",
    )

    seed = int(raw.get("seed", 0))
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}: must be an integer") from exc

    count = int(raw.get("count", 1))
    _require(count >= 0, "count", "must be >= 0")

    return SynthesisConfig(
        canvas=(width, height),
        library_dir=str(raw["library_dir"]),
        n_range=(n_min, n_max),
        gamma_range=gamma_range,
        theta_range=theta_range,
        bo=bo,
        scorer=scorer,
        illumination=illumination,
        occlusion_export_max=occlusion_export_max,
        seed=seed,
        count=count,
        category=str(raw.get("category", "object")),
    )


def load_config(path) -> "SynthesisConfig":
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    config = parse_config(raw)
    base = path.parent
    library = Path(config.library_dir)
    if not library.is_absolute():
        config.library_dir = str(base / library)
    config.illumination.reference_pool = [
        str(p if Path(p).is_absolute() else base / p)
        for p in config.illumination.reference_pool
    ]
    return config


# ---------------------------------------------------------------------------
# Manifest assembly and validation


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def build_manifest(images, annotations, categories, occlusion_export_max) -> dict:
    return {
        "info": {"occlusion_export_max": float(occlusion_export_max)},
        "images": images,
        "annotations": annotations,
        "categories": categories,
    }


def validate_manifest(manifest: dict, image_dir) -> ValidationReport:
    """Re-derive annotation geometry from the RLE masks and report mismatches.

    Checks id uniqueness, image references, RLE dimensions, area and bbox
    consistency, per-image disjointness of visible masks, and the excluded
    flag against the recorded occlusion threshold.
    """
    report = ValidationReport()
    image_dir = Path(image_dir)
    threshold = float(
        manifest.get("info", {}).get(
            "occlusion_export_max", DEFAULT_OCCLUSION_EXPORT_MAX
        )
    )

    images = {img["id"]: img for img in manifest.get("images", [])}
    if len(images) != len(manifest.get("images", [])):
        report.violations.append("duplicate image ids")
    seen_ann = set()
    masks_by_image: dict = {}

    for img in manifest.get("images", []):
        path = image_dir / img["file_name"]
        if not path.exists():
            report.violations.append(f"image {img['id']}: missing file {img['file_name']}")
            continue
        with Image.open(path) as handle:
            if handle.size != (img["width"], img["height"]):
                report.violations.append(
                    f"image {img['id']}: file is {handle.size}, "
                    f"manifest says {(img['width'], img['height'])}"
                )

    for ann in manifest.get("annotations", []):
        aid = ann["id"]
        if aid in seen_ann:
            report.violations.append(f"annotation {aid}: duplicate id")
        seen_ann.add(aid)
        if ann["image_id"] not in images:
            report.violations.append(f"annotation {aid}: unknown image {ann['image_id']}")
            continue
        img = images[ann["image_id"]]
        mask = decode_rle(ann["segmentation"])
        if mask.shape != (img["height"], img["width"]):
            report.violations.append(
                f"annotation {aid}: RLE size {mask.shape} does not match image"
            )
            continue
        area = int(mask.sum())
        if area != ann["area"]:
            report.violations.append(
                f"annotation {aid}: area {ann['area']} != recount {area}"
            )
        bbox = _bbox_from_mask(mask)
        if [int(v) for v in ann["bbox"]] != bbox:
            report.violations.append(
                f"annotation {aid}: bbox {ann['bbox']} != recount {bbox}"
            )
        occ = float(ann["occlusion_fraction"])
        expected_excluded = occ >= threshold
        if bool(ann["excluded"]) != expected_excluded:
            report.violations.append(
                f"annotation {aid}: excluded={ann['excluded']} but occlusion "
                f"{occ:.6f} vs threshold {threshold}"
            )
        masks_by_image.setdefault(ann["image_id"], []).append((aid, mask))

    for image_id, entries in masks_by_image.items():
        total = np.zeros_like(entries[0][1], dtype=np.int32)
        for _, mask in entries:
            total += mask
        if (total > 1).any():
            report.violations.append(
                f"image {image_id}: visible masks overlap"
            )

    return report


def _bbox_from_mask(mask: np.ndarray) -> list:
    rows = np.any(mask, axis=1)
    if not rows.any():
        return [0, 0, 0, 0]
    cols = np.any(mask, axis=0)
    r = np.flatnonzero(rows)
    c = np.flatnonzero(cols)
    return [int(c[0]), int(r[0]), int(c[-1] - c[0] + 1), int(r[-1] - r[0] + 1)]
