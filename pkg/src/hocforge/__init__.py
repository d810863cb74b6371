"""hocforge: synthetic homogeneous-object-cluster images with annotations."""

from .bayesopt import (
    BOConfig,
    Bounds,
    KernelParams,
    ObservationSet,
    bayes_opt,
    expected_improvement,
    gp_fit,
    gp_predict,
    kernel,
    maximize_acquisition,
)
from .color import BlurSpec, gaussian_blur, hsv_to_rgb, illum_transform_pair, rgb_to_hsv
from .extraction import BackgroundModel, estimate_background, extract_cutout
from .imaging import (
    Cutout,
    ImageBuffer,
    Placement,
    Rect,
    SceneState,
    composite_under,
    crop,
    occlusion_fraction,
    tight_bbox,
    transform_cutout,
)
from .pipeline import (
    IlluminationConfig,
    ScorerSpec,
    SynthesisConfig,
    generate_dataset,
    generate_scene,
    place_first,
    place_next,
)
from .scoring import Score, ScoreRequest, ScorerClient, external_score, heuristic_score

__version__ = "0.1.0"

__all__ = [
    "BOConfig",
    "BackgroundModel",
    "BlurSpec",
    "Bounds",
    "Cutout",
    "IlluminationConfig",
    "ImageBuffer",
    "KernelParams",
    "ObservationSet",
    "Placement",
    "Rect",
    "SceneState",
    "Score",
    "ScoreRequest",
    "ScorerClient",
    "ScorerSpec",
    "SynthesisConfig",
    "bayes_opt",
    "composite_under",
    "crop",
    "estimate_background",
    "expected_improvement",
    "external_score",
    "extract_cutout",
    "gaussian_blur",
    "generate_dataset",
    "generate_scene",
    "gp_fit",
    "gp_predict",
    "heuristic_score",
    "hsv_to_rgb",
    "illum_transform_pair",
    "kernel",
    "maximize_acquisition",
    "occlusion_fraction",
    "place_first",
    "place_next",
    "rgb_to_hsv",
    "tight_bbox",
    "transform_cutout",
]
