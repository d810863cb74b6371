import numpy as np
import pytest

from hocforge.imaging import Cutout, ImageBuffer


def opaque_square(side: int, color=(0.8, 0.2, 0.1)) -> Cutout:
    data = np.zeros((side, side, 4))
    data[:, :, :3] = color
    data[:, :, 3] = 1.0
    return Cutout(ImageBuffer(data), source_id=f"square{side}")


def opaque_disc(diameter: int, color=(0.1, 0.4, 0.9)) -> Cutout:
    r = diameter / 2.0
    ys, xs = np.mgrid[0:diameter, 0:diameter]
    inside = (ys - r + 0.5) ** 2 + (xs - r + 0.5) ** 2 <= r**2
    data = np.zeros((diameter, diameter, 4))
    data[:, :, :3] = color
    data[:, :, 3] = inside.astype(float)
    return Cutout(ImageBuffer(data), source_id=f"disc{diameter}")


def soft_blob(side: int, color=(0.3, 0.7, 0.2)) -> Cutout:
    """Gaussian-falloff alpha: soft fringe below 0.5, core above."""
    r = side / 2.0
    ys, xs = np.mgrid[0:side, 0:side]
    d2 = ((ys - r + 0.5) ** 2 + (xs - r + 0.5) ** 2) / (r / 1.6) ** 2
    alpha = np.exp(-d2)
    alpha[alpha < 0.02] = 0.0
    data = np.zeros((side, side, 4))
    data[:, :, :3] = color
    data[:, :, 3] = alpha
    # keep the cutout tight
    rows = np.any(alpha > 0, axis=1)
    cols = np.any(alpha > 0, axis=0)
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return Cutout(ImageBuffer(data[r0 : r1 + 1, c0 : c1 + 1]), source_id=f"blob{side}")


def random_image(rng: np.random.Generator, width: int, height: int) -> ImageBuffer:
    data = rng.uniform(size=(height, width, 4))
    data[:, :, 3] = 1.0
    return ImageBuffer(data)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
