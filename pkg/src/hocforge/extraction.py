"""Cutout extraction from single-object frames on a contrastive background.

A soft alpha matte is derived from per-pixel RGB distance to the estimated
background color; the largest 4-connected foreground component is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NoForeground
from .imaging import Cutout, ImageBuffer

DEFAULT_BORDER_FRACTION = 0.05
DEFAULT_TOLERANCE_LO = 0.08
DEFAULT_TOLERANCE_HI = 0.25

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class BackgroundModel:
    mean_color: np.ndarray  # (3,) RGB in [0, 1]
    tolerance_lo: float
    tolerance_hi: float

    def __post_init__(self):
        self.mean_color = np.asarray(self.mean_color, dtype=np.float64)
        if not 0.0 < self.tolerance_lo < self.tolerance_hi:
            raise ValueError("need 0 < tolerance_lo < tolerance_hi")


def estimate_background(
    frame: ImageBuffer,
    border_fraction: float = DEFAULT_BORDER_FRACTION,
    tolerance_lo: float = DEFAULT_TOLERANCE_LO,
    tolerance_hi: float = DEFAULT_TOLERANCE_HI,
) -> BackgroundModel:
    """Mean color of the border band (the object is assumed centered)."""
    if not 0.0 < border_fraction < 0.5:
        raise ValueError("border_fraction must be in (0, 0.5)")
    h, w = frame.height, frame.width
    band_r = max(1, round(h * border_fraction))
    band_c = max(1, round(w * border_fraction))

    band = np.zeros((h, w), dtype=bool)
    band[:band_r, :] = True
    band[h - band_r :, :] = True
    band[:, :band_c] = True
    band[:, w - band_c :] = True

    mean_color = frame.data[band, :3].mean(axis=0)
    return BackgroundModel(mean_color, tolerance_lo, tolerance_hi)


def extract_cutout(frame: ImageBuffer, bg: BackgroundModel, source_id: str = "") -> Cutout:
    """Soft-threshold background-distance matting plus component cleanup.

    alpha ramps from 0 at tolerance_lo to 1 at tolerance_hi of RGB distance;
    only the largest 4-connected component of {alpha >= 0.5} survives.
    """
    distance = np.linalg.norm(frame.data[:, :, :3] - bg.mean_color, axis=2)
    alpha = np.clip(
        (distance - bg.tolerance_lo) / (bg.tolerance_hi - bg.tolerance_lo), 0.0, 1.0
    )

    hard = alpha >= 0.5
    if not hard.any():
        raise NoForeground("no pixel reaches alpha 0.5")

    labels, count = ndimage.label(hard, structure=_FOUR_CONNECTED)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    keep = int(np.argmax(sizes))  # ties: lowest label, scan order
    component = labels == keep

    alpha = np.where(component, alpha, 0.0)

    rows = np.any(component, axis=1)
    cols = np.any(component, axis=0)
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]

    sprite = frame.data[r0 : r1 + 1, c0 : c1 + 1].copy()
    sprite[:, :, 3] = alpha[r0 : r1 + 1, c0 : c1 + 1]
    return Cutout(sprite=ImageBuffer(sprite), source_id=source_id)
