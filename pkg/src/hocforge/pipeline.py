"""Greedy sequential placement guided by a placement scorer, plus dataset
assembly.

Each scene starts with one object at the canvas center; every further
object is placed by maximizing the scorer over the placement box with the
GP optimizer, then drawn underneath the existing cluster.  Scenes are
seeded independently (splitmix64 of the dataset seed and scene index), so
generation parallelizes without changing any output byte.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .bayesopt import BOConfig, Bounds, bayes_opt
from .color import BlurSpec, default_sigma, illum_transform_pair
from .datasetio import (
    build_manifest,
    encode_rle,
    load_cutout_library,
    png_bytes,
    read_png,
    write_manifest,
)
from .errors import ConfigError, DegenerateConfig, DegenerateTransform, OutOfBounds
from .imaging import (
    Cutout,
    ImageBuffer,
    Placement,
    SceneState,
    composite_under,
    crop,
    mask_bbox,
    resize_bilinear,
    tight_bbox,
    transform_cutout,
)
from .scoring import Score, ScoreRequest, ScorerClient, external_score, heuristic_score

_DILATION_STRUCTURE = np.ones((3, 3), dtype=bool)  # 8-connected
_DILATION_ITERATIONS = 3  # pixels of contact tolerance

_U64 = (1 << 64) - 1


@dataclass
class ScorerSpec:
    kind: str = "heuristic"  # heuristic | external | random
    command: Optional[str] = None
    address: Optional[str] = None


@dataclass
class IlluminationConfig:
    enabled: bool = False
    sigma: Optional[float] = None  # None: max(canvas)/8
    reference_pool: list = field(default_factory=list)


@dataclass
class SynthesisConfig:
    canvas: tuple
    library_dir: str
    n_range: tuple = (10, 30)
    gamma_range: tuple = (0.8, 1.2)
    theta_range: tuple = (0.0, 360.0)
    bo: BOConfig = field(default_factory=BOConfig)
    scorer: ScorerSpec = field(default_factory=ScorerSpec)
    illumination: IlluminationConfig = field(default_factory=IlluminationConfig)
    occlusion_export_max: float = 0.8
    seed: int = 0
    count: int = 1
    category: str = "object"


@dataclass
class AnnotationRecord:
    category_id: int
    placement: Placement
    bbox: list
    area: int
    occlusion_fraction: float
    segmentation: dict
    excluded: bool
    cutout_id: str = ""


@dataclass
class SceneResult:
    state: SceneState
    image: ImageBuffer
    annotations: list
    n: int
    reference_image: Optional[ImageBuffer] = None
    reference_name: Optional[str] = None


def splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _U64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def scene_seed(seed: int, index: int) -> int:
    """Seed for scene `index`: the index-th output of a splitmix64 stream."""
    return splitmix64((seed + (index + 1) * 0x9E3779B97F4A7C15) & _U64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def build_scorer(spec: ScorerSpec):
    """Resolve a scorer spec to (callable, closer)."""
    if spec.kind == "heuristic":
        return heuristic_score, lambda: None
    if spec.kind == "external":
        client = ScorerClient(command=spec.command, address=spec.address)
        return (lambda request: external_score(request, client)), client.close
    if spec.kind == "random":
        return None, lambda: None
    raise ConfigError(f"scorer.kind: unknown kind {spec.kind!r}")


def placement_bounds(cutout: Cutout, config: SynthesisConfig) -> Bounds:
    """Search box for (theta, gamma, x, y) such that every sample keeps the
    transformed sprite inside the canvas, for any rotation at gamma_max."""
    w, h = cutout.sprite.width, cutout.sprite.height
    width, height = config.canvas
    margin = config.gamma_range[1] * math.hypot(w, h) / 2.0 + 2.0
    if margin >= width - margin or margin >= height - margin:
        raise DegenerateConfig(
            f"cutout {w}x{h} at gamma {config.gamma_range[1]} cannot fit "
            f"the {width}x{height} canvas with rotation margin"
        )
    lo = [config.theta_range[0], config.gamma_range[0], margin, margin]
    hi = [config.theta_range[1], config.gamma_range[1], width - margin, height - margin]
    if not all(a < b for a, b in zip(lo, hi)):
        raise DegenerateConfig("theta_range and gamma_range must be non-degenerate")
    return Bounds(np.array(lo), np.array(hi))


def _sample_transform(cutout, config, rng):
    theta = float(rng.uniform(config.theta_range[0], config.theta_range[1])) % 360.0
    gamma = float(rng.uniform(config.gamma_range[0], config.gamma_range[1]))
    return theta, gamma, transform_cutout(cutout, theta, gamma)


def place_first(library: list, config: SynthesisConfig, rng) -> SceneState:
    """Place one uniformly drawn object at the canvas center on white."""
    if not library:
        raise ValueError("cutout library is empty")
    width, height = config.canvas
    cutout = library[int(rng.integers(len(library)))]
    theta, gamma, transformed = _sample_transform(cutout, config, rng)
    scene = SceneState.blank(width, height)
    x, y = width / 2.0, height / 2.0
    try:
        return composite_under(
            scene, transformed, x, y, placement=Placement(theta, gamma, x, y)
        )
    except OutOfBounds as exc:
        raise DegenerateConfig(f"first object does not fit the canvas: {exc}") from exc


def place_next(
    scene: SceneState,
    library: list,
    scorer: Callable[[ScoreRequest], Score],
    config: SynthesisConfig,
    rng,
) -> SceneState:
    """Add one object at the placement that maximizes the scorer."""
    if not scene.instances:
        raise ValueError("place_next requires a scene with at least one instance")
    k = len(scene.instances) + 1
    cutout = library[int(rng.integers(len(library)))]
    bounds = placement_bounds(cutout, config)
    contact_zone = ndimage.binary_dilation(
        scene.occupancy, structure=_DILATION_STRUCTURE, iterations=_DILATION_ITERATIONS
    )

    def objective(point) -> float:
        theta = float(point[0]) % 360.0
        gamma, x, y = float(point[1]), float(point[2]), float(point[3])
        try:
            transformed = transform_cutout(cutout, theta, gamma)
            candidate = composite_under(scene, transformed, x, y)
        except (DegenerateTransform, OutOfBounds):
            return 0.0  # infeasible corner case; worst score
        record = candidate.instances[-1]
        full = int(record.full_mask.sum())
        if full == 0:
            return 0.0
        occlusion_new = 1.0 - int(record.visible_mask.sum()) / full
        contact_ratio = int((contact_zone & record.full_mask).sum()) / full
        request = ScoreRequest(
            crop=crop(candidate.canvas, tight_bbox(candidate)),
            k=k,
            occlusion_new=occlusion_new,
            contact_ratio=contact_ratio,
        )
        return scorer(request).value

    best, _, trace = bayes_opt(objective, bounds, config.bo, rng)
    placement = Placement(best.theta % 360.0, best.gamma, best.x, best.y)
    transformed = transform_cutout(cutout, placement.theta, placement.gamma)
    return composite_under(
        scene, transformed, placement.x, placement.y, placement=placement, trace=trace
    )


def place_next_random(
    scene: SceneState, library: list, config: SynthesisConfig, rng
) -> SceneState:
    """Baseline: one uniform placement over the same feasible box."""
    cutout = library[int(rng.integers(len(library)))]
    bounds = placement_bounds(cutout, config)
    point = bounds.denormalize(rng.uniform(size=4))
    placement = Placement(
        float(point[0]) % 360.0, float(point[1]), float(point[2]), float(point[3])
    )
    transformed = transform_cutout(cutout, placement.theta, placement.gamma)
    return composite_under(
        scene, transformed, placement.x, placement.y, placement=placement
    )


def annotate(state: SceneState, config: SynthesisConfig) -> list:
    records = []
    for inst in state.instances:
        full = int(inst.full_mask.sum())
        visible = int(inst.visible_mask.sum())
        occlusion = 1.0 - visible / full if full > 0 else 1.0
        rect = mask_bbox(inst.visible_mask)
        bbox = [rect.x0, rect.y0, rect.width, rect.height] if rect else [0, 0, 0, 0]
        records.append(
            AnnotationRecord(
                category_id=1,
                placement=inst.placement,
                bbox=bbox,
                area=visible,
                occlusion_fraction=occlusion,
                segmentation=encode_rle(inst.visible_mask),
                excluded=occlusion >= config.occlusion_export_max,
                cutout_id=inst.cutout_id,
            )
        )
    return records


def generate_scene(
    library: list,
    config: SynthesisConfig,
    rng,
    scorer: Optional[Callable[[ScoreRequest], Score]] = None,
) -> SceneResult:
    """Build one scene: N placements, then optional illumination transfer."""
    n = int(rng.integers(config.n_range[0], config.n_range[1] + 1))
    if scorer is not None:
        scorer_fn, closer = scorer, lambda: None
    else:
        scorer_fn, closer = build_scorer(config.scorer)
    try:
        scene = place_first(library, config, rng)
        for _ in range(n - 1):
            if scorer_fn is None:
                scene = place_next_random(scene, library, config, rng)
            else:
                scene = place_next(scene, library, scorer_fn, config, rng)
    finally:
        closer()

    image = scene.canvas
    reference_image = None
    reference_name = None
    if config.illumination.enabled:
        pool = config.illumination.reference_pool
        if not pool:
            raise ConfigError("illumination.reference_pool: empty with illumination enabled")
        ref_path = pool[int(rng.integers(len(pool)))]
        reference = read_png(ref_path)
        reference = resize_bilinear(reference, image.width, image.height)
        sigma = config.illumination.sigma or default_sigma(image.width, image.height)
        image, reference_image = illum_transform_pair(image, reference, BlurSpec(sigma))
        reference_name = Path(ref_path).stem

    return SceneResult(
        state=scene,
        image=image,
        annotations=annotate(scene, config),
        n=n,
        reference_image=reference_image,
        reference_name=reference_name,
    )


# ---------------------------------------------------------------------------
# Dataset generation

_LIBRARY_CACHE: dict = {}


def _library_cached(path: str) -> list:
    library = _LIBRARY_CACHE.get(path)
    if library is None:
        library = load_cutout_library(path)
        _LIBRARY_CACHE[path] = library
    return library


def _overlay_png(result: SceneResult) -> bytes:
    """Debug rendering: tint each instance's visible mask a distinct hue."""
    from .color import hsv_to_rgb

    data = result.image.data.copy()
    count = max(1, len(result.state.instances))
    for idx, inst in enumerate(result.state.instances):
        hue = np.full(inst.visible_mask.shape, (360.0 * idx / count) % 360.0)
        ones = np.ones_like(hue)
        tint = hsv_to_rgb(hue, ones, ones, ones).data[:, :, :3]
        mask = inst.visible_mask
        data[mask, :3] = 0.5 * data[mask, :3] + 0.5 * tint[mask]
    return png_bytes(ImageBuffer(data))


def _generate_entry(task) -> dict:
    config, index, debug_overlay = task
    library = _library_cached(config.library_dir)
    rng = make_rng(scene_seed(config.seed, index))
    result = generate_scene(library, config, rng)
    entry = {
        "index": index,
        "width": result.image.width,
        "height": result.image.height,
        "scene_png": png_bytes(result.image),
        "reference_png": (
            png_bytes(result.reference_image) if result.reference_image else None
        ),
        "reference_name": result.reference_name,
        "annotations": result.annotations,
        "n": result.n,
    }
    if debug_overlay:
        entry["overlay_png"] = _overlay_png(result)
    return entry


def generate_dataset(
    config: SynthesisConfig,
    out_dir,
    workers: int = 1,
    debug_overlay: bool = False,
) -> dict:
    """Generate config.count scenes and write PNGs plus the manifest.

    Scene i is seeded by splitmix64(seed, i); workers only change wall
    time, never bytes.  Returns the manifest that was written.
    """
    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(config, i, debug_overlay) for i in range(config.count)]
    if workers <= 1 or len(tasks) <= 1:
        entries = [_generate_entry(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_generate_entry, tasks))

    images = []
    annotations = []
    annotation_id = 1
    for entry in entries:
        index = entry["index"]
        file_name = f"scene_{index:05d}.png"
        (images_dir / file_name).write_bytes(entry["scene_png"])
        image_entry = {
            "id": index + 1,
            "file_name": file_name,
            "width": entry["width"],
            "height": entry["height"],
        }
        if entry["reference_png"] is not None:
            ref_name = f"scene_{index:05d}_ref.png"
            (images_dir / ref_name).write_bytes(entry["reference_png"])
            image_entry["reference_image"] = ref_name
        if debug_overlay:
            (images_dir / f"scene_{index:05d}_overlay.png").write_bytes(
                entry["overlay_png"]
            )
        images.append(image_entry)
        for record in entry["annotations"]:
            annotations.append(
                {
                    "id": annotation_id,
                    "image_id": index + 1,
                    "category_id": record.category_id,
                    "bbox": record.bbox,
                    "area": record.area,
                    "segmentation": record.segmentation,
                    "occlusion_fraction": record.occlusion_fraction,
                    "excluded": record.excluded,
                }
            )
            annotation_id += 1

    manifest = build_manifest(
        images=images,
        annotations=annotations,
        categories=[{"id": 1, "name": config.category}],
        occlusion_export_max=config.occlusion_export_max,
    )
    write_manifest(manifest, out / "manifest.json")
    return manifest
