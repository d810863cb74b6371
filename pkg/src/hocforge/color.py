"""HSV conversion, large-kernel Gaussian smoothing, and illumination transfer.

The illumination transfer rewrites the V (brightness) channel of a
synthetic/real image pair so both carry the real image's smoothed
illumination field: V' = V - mean(V) + blur(V_real).  H and S are never
touched; V is clamped to [0, 1] only after the transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatch
from .imaging import ImageBuffer


@dataclass
class BlurSpec:
    """Gaussian smoothing parameters; the border is always replicated."""

    sigma: float
    radius: int = field(default=0)

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be > 0")
        if self.radius == 0:
            self.radius = math.ceil(3.0 * self.sigma)


def default_sigma(width: int, height: int) -> float:
    """Large-kernel default: an eighth of the longer image side."""
    return max(width, height) / 8.0


def rgb_to_hsv(image: ImageBuffer):
    """Split an RGBA image into hexcone H (degrees), S, V, and A channels.

    V = max(R, G, B); H = 0 wherever S = 0.
    """
    rgb = image.data[:, :, :3]
    alpha = image.data[:, :, 3].copy()

    v = rgb.max(axis=2)
    c = v - rgb.min(axis=2)
    s = np.where(v > 0.0, c / np.where(v > 0.0, v, 1.0), 0.0)

    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    safe_c = np.where(c > 0.0, c, 1.0)
    h = np.zeros_like(v)
    is_r = (v == r) & (c > 0.0)
    is_g = (v == g) & (c > 0.0) & ~is_r
    is_b = (c > 0.0) & ~is_r & ~is_g
    h[is_r] = (60.0 * ((g - b) / safe_c) % 360.0)[is_r]
    h[is_g] = (60.0 * ((b - r) / safe_c) + 120.0)[is_g]
    h[is_b] = (60.0 * ((r - g) / safe_c) + 240.0)[is_b]
    h = h % 360.0
    return h, s, v, alpha


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray, a: np.ndarray) -> ImageBuffer:
    """Inverse hexcone mapping; V is clamped to [0, 1] before converting."""
    v = np.clip(v, 0.0, 1.0)
    h = np.asarray(h, dtype=np.float64) % 360.0

    c = v * s
    hp = h / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    m = v - c

    sector = np.floor(hp).astype(np.int64) % 6
    zeros = np.zeros_like(c)
    r1 = np.choose(sector, [c, x, zeros, zeros, x, c])
    g1 = np.choose(sector, [x, c, c, x, zeros, zeros])
    b1 = np.choose(sector, [zeros, zeros, x, c, c, x])

    out = np.empty(h.shape + (4,), dtype=np.float64)
    out[:, :, 0] = np.clip(r1 + m, 0.0, 1.0)
    out[:, :, 1] = np.clip(g1 + m, 0.0, 1.0)
    out[:, :, 2] = np.clip(b1 + m, 0.0, 1.0)
    out[:, :, 3] = a
    return ImageBuffer(out)


def gaussian_kernel(spec: BlurSpec) -> np.ndarray:
    """Discrete 1-D kernel w_i ~ exp(-i^2 / 2 sigma^2), normalized to sum 1."""
    offsets = np.arange(-spec.radius, spec.radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * spec.sigma**2))
    return weights / weights.sum()


def gaussian_blur(channel: np.ndarray, spec: BlurSpec) -> np.ndarray:
    """Separable Gaussian smoothing of a 2-D channel with replicate border."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.size == 0:
        raise ValueError("channel is empty")
    kernel = gaussian_kernel(spec)
    out = ndimage.correlate1d(channel, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def illum_transform_pair(
    synthetic: ImageBuffer, real: ImageBuffer, spec: BlurSpec
):
    """Apply the V-channel illumination transfer to a synthetic/real pair.

    Both images receive the real image's blurred V field after their own
    mean is subtracted; only then is V clamped back to [0, 1].  Returns the
    transformed (synthetic, real) pair.
    """
    if (synthetic.width, synthetic.height) != (real.width, real.height):
        raise ShapeMismatch(
            f"synthetic {synthetic.width}x{synthetic.height} vs "
            f"real {real.width}x{real.height}"
        )

    h_s, s_s, v_s, a_s = rgb_to_hsv(synthetic)
    h_r, s_r, v_r, a_r = rgb_to_hsv(real)

    base = gaussian_blur(v_r, spec)
    v_s_new = v_s - v_s.mean() + base
    v_r_new = v_r - v_r.mean() + base

    return (
        hsv_to_rgb(h_s, s_s, v_s_new, a_s),
        hsv_to_rgb(h_r, s_r, v_r_new, a_r),
    )
