"""Image buffers, sprite transforms, and the under-compositing operator.

Pixel data is RGBA float64 in [0, 1], straight (non-premultiplied) alpha,
row-major.  Quantization to 8 bits happens only at file I/O (dataset-io).

New objects are always drawn *underneath* existing scene content: an
instance can only be occluded by instances placed before it, so placing an
object never changes a pixel that was already covered by the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateInstance,
    DegenerateTransform,
    EmptyScene,
    OutOfBounds,
)


@dataclass
class ImageBuffer:
    """RGBA raster of shape (height, width, 4), channels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 4:
            raise ValueError("image data must have shape (H, W, 4)")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())

    def validate(self) -> None:
        """Check the channel-range invariant (boundary use; not hot-path)."""
        if not np.isfinite(self.data).all():
            raise ValueError("non-finite channel value")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("channel value outside [0, 1]")

    @classmethod
    def white(cls, width: int, height: int) -> "ImageBuffer":
        return cls(np.ones((height, width, 4), dtype=np.float64))

    @classmethod
    def transparent(cls, width: int, height: int) -> "ImageBuffer":
        return cls(np.zeros((height, width, 4), dtype=np.float64))


@dataclass
class Cutout:
    """Single-object RGBA sprite, tight around its alpha > 0 support."""

    sprite: ImageBuffer
    source_id: str = ""

    def is_tight(self) -> bool:
        alpha = self.sprite.data[:, :, 3]
        rows = np.any(alpha > 0.0, axis=1)
        cols = np.any(alpha > 0.0, axis=0)
        if not rows.any():
            return False
        return bool(rows[0] and rows[-1] and cols[0] and cols[-1])


@dataclass
class Placement:
    """One placement operation: rotation, scale, and center position."""

    theta: float  # degrees in [0, 360)
    gamma: float  # scale factor > 0
    x: float  # center column, pixels
    y: float  # center row, pixels


@dataclass
class Rect:
    """Axis-aligned pixel rectangle; (x0, y0) is the top-left corner."""

    x0: int
    y0: int
    width: int
    height: int


@dataclass
class InstanceRecord:
    """One placed instance: masks are full-canvas boolean bitmaps."""

    cutout_id: str
    placement: Placement
    full_mask: np.ndarray
    visible_mask: np.ndarray
    trace: object = None  # optimizer trace attached by the pipeline


@dataclass
class SceneState:
    """Canvas plus per-instance masks and the union occupancy bitmap.

    `content` is the accumulated sprite layer over a transparent
    background; `canvas` is `content` flattened over white.  Instance
    order is placement order (index = k - 1).
    """

    canvas: ImageBuffer
    content: ImageBuffer
    occupancy: np.ndarray
    instances: list = field(default_factory=list)

    @classmethod
    def blank(cls, width: int, height: int) -> "SceneState":
        return cls(
            canvas=ImageBuffer.white(width, height),
            content=ImageBuffer.transparent(width, height),
            occupancy=np.zeros((height, width), dtype=bool),
            instances=[],
        )

    @property
    def width(self) -> int:
        return self.canvas.width

    @property
    def height(self) -> int:
        return self.canvas.height


def _tighten(data: np.ndarray) -> np.ndarray:
    """Crop an RGBA array to the bounding box of its alpha > 0 support."""
    alpha = data[:, :, 3]
    rows = np.any(alpha > 0.0, axis=1)
    cols = np.any(alpha > 0.0, axis=0)
    if not rows.any():
        raise DegenerateTransform("transform produced an empty sprite")
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return data[r0 : r1 + 1, c0 : c1 + 1]


def transform_cutout(cutout: Cutout, theta: float, gamma: float) -> Cutout:
    """Rotate a cutout by `theta` degrees then scale it by `gamma`.

    Rotation is about the sprite center; all four channels are resampled
    bilinearly, with samples outside the source treated as fully
    transparent.  theta = 0 / quarter turns at gamma = 1 are exact pixel
    permutations.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    theta = float(theta) % 360.0

    src = cutout.sprite.data
    if gamma == 1.0 and theta == 0.0:
        return Cutout(ImageBuffer(src.copy()), cutout.source_id)
    if gamma == 1.0 and theta in (90.0, 180.0, 270.0):
        k = int(theta // 90.0)
        return Cutout(ImageBuffer(np.rot90(src, k).copy()), cutout.source_id)

    h, w = src.shape[:2]
    rad = math.radians(theta)
    cos_t, sin_t = math.cos(rad), math.sin(rad)

    out_w = math.ceil(gamma * (w * abs(cos_t) + h * abs(sin_t)))
    out_h = math.ceil(gamma * (w * abs(sin_t) + h * abs(cos_t)))
    if out_w < 1 or out_h < 1:
        raise DegenerateTransform("scaled sprite smaller than 1x1")

    # Inverse mapping: output offset u -> source offset v = R(theta) u / gamma,
    # with screen coordinates (x right, y down).
    scx, scy = (w - 1) / 2.0, (h - 1) / 2.0
    ocx, ocy = (out_w - 1) / 2.0, (out_h - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    ux = xs - ocx
    uy = ys - ocy
    vx = (cos_t * ux - sin_t * uy) / gamma + scx
    vy = (sin_t * ux + cos_t * uy) / gamma + scy

    out = _bilinear_sample(src, vx, vy)
    return Cutout(ImageBuffer(_tighten(out).copy()), cutout.source_id)


def _bilinear_sample(src: np.ndarray, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    """Sample RGBA `src` at float coords; out-of-support reads are zero."""
    h, w = src.shape[:2]
    x0 = np.floor(vx).astype(np.int64)
    y0 = np.floor(vy).astype(np.int64)
    fx = vx - x0
    fy = vy - y0

    out = np.zeros(vx.shape + (4,), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xi_c = np.clip(xi, 0, w - 1)
            yi_c = np.clip(yi, 0, h - 1)
            sample = src[yi_c, xi_c] * inside[..., None]
            out += wgt[..., None] * sample
    return out


def resize_bilinear(image: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """Resample an image to a new size (edge-clamped bilinear)."""
    if width < 1 or height < 1:
        raise ValueError("target size must be at least 1x1")
    src = image.data
    sy = image.height / height
    sx = image.width / width
    ys = (np.arange(height) + 0.5) * sy - 0.5
    xs = (np.arange(width) + 0.5) * sx - 0.5
    vy, vx = np.meshgrid(np.clip(ys, 0, image.height - 1),
                         np.clip(xs, 0, image.width - 1), indexing="ij")
    return ImageBuffer(_bilinear_sample(src, vx, vy))


def binary_mask(cutout: Cutout) -> np.ndarray:
    """Binary mask of a sprite: alpha >= 0.5."""
    return cutout.sprite.data[:, :, 3] >= 0.5


def _anchor(x: float, y: float, w: int, h: int) -> tuple:
    """Top-left corner for a w x h sprite centered at (x, y), half-up rounding."""
    top = math.floor(y - h / 2.0 + 0.5)
    left = math.floor(x - w / 2.0 + 0.5)
    return top, left


def composite_under(
    scene: SceneState,
    cutout: Cutout,
    x: float,
    y: float,
    placement: Optional[Placement] = None,
    trace: object = None,
) -> SceneState:
    """Place a pre-transformed cutout centered at (x, y), under all existing
    content, and return the new scene.

    The sprite contributes nothing inside the current occupancy, so pixels
    already covered by the scene are bit-unchanged.  Outside occupancy the
    result is existing-over-new-over-white.
    """
    sprite = cutout.sprite.data
    h, w = sprite.shape[:2]
    H, W = scene.height, scene.width
    top, left = _anchor(x, y, w, h)
    if top < 0 or left < 0 or top + h > H or left + w > W:
        raise OutOfBounds(
            f"sprite {w}x{h} centered at ({x:.1f}, {y:.1f}) exits the canvas"
        )

    rs = slice(top, top + h)
    cs = slice(left, left + w)
    occ_region = scene.occupancy[rs, cs]

    alpha_s = sprite[:, :, 3] * ~occ_region
    upd = alpha_s > 0.0

    content = scene.content.data.copy()
    canvas = scene.canvas.data.copy()
    region = content[rs, cs]

    if upd.any():
        a_e = region[:, :, 3]
        out_a = a_e + alpha_s * (1.0 - a_e)
        # existing over new, in premultiplied space, back to straight color
        p_out = (
            region[:, :, :3] * a_e[:, :, None]
            + sprite[:, :, :3] * (alpha_s * (1.0 - a_e))[:, :, None]
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            rgb_out = p_out / out_a[:, :, None]
        region[upd, :3] = rgb_out[upd]
        region[upd, 3] = out_a[upd]

        canvas_region = canvas[rs, cs]
        flat = region[:, :, :3] * region[:, :, 3:4] + (1.0 - region[:, :, 3:4])
        canvas_region[upd, :3] = flat[upd]
        canvas_region[upd, 3] = 1.0

    full_mask = np.zeros((H, W), dtype=bool)
    full_mask[rs, cs] = sprite[:, :, 3] >= 0.5
    visible_mask = full_mask & ~scene.occupancy

    record = InstanceRecord(
        cutout_id=cutout.source_id,
        placement=placement or Placement(theta=0.0, gamma=1.0, x=x, y=y),
        full_mask=full_mask,
        visible_mask=visible_mask,
        trace=trace,
    )
    return SceneState(
        canvas=ImageBuffer(canvas),
        content=ImageBuffer(content),
        occupancy=scene.occupancy | full_mask,
        instances=scene.instances + [record],
    )


def occlusion_fraction(scene: SceneState, index: int) -> float:
    """Fraction of instance `index`'s full mask hidden by earlier instances."""
    record = scene.instances[index]
    full = int(record.full_mask.sum())
    if full == 0:
        raise DegenerateInstance(f"instance {index} has an empty full mask")
    visible = int(record.visible_mask.sum())
    return 1.0 - visible / full


def mask_bbox(mask: np.ndarray) -> Optional[Rect]:
    """Tight Rect around the true pixels of a bitmap, or None if empty."""
    rows = np.any(mask, axis=1)
    if not rows.any():
        return None
    cols = np.any(mask, axis=0)
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return Rect(x0=int(c0), y0=int(r0), width=int(c1 - c0 + 1), height=int(r1 - r0 + 1))


def tight_bbox(scene: SceneState) -> Rect:
    """Minimal rectangle containing all occupancy pixels."""
    rect = mask_bbox(scene.occupancy)
    if rect is None:
        raise EmptyScene("scene occupancy is empty")
    return rect


def crop(image: ImageBuffer, rect: Rect) -> ImageBuffer:
    """Exact sub-image copy."""
    if (
        rect.x0 < 0
        or rect.y0 < 0
        or rect.width < 1
        or rect.height < 1
        or rect.x0 + rect.width > image.width
        or rect.y0 + rect.height > image.height
    ):
        raise OutOfBounds(f"rect {rect} outside image {image.width}x{image.height}")
    return ImageBuffer(
        image.data[rect.y0 : rect.y0 + rect.height, rect.x0 : rect.x0 + rect.width].copy()
    )
