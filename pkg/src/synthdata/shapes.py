"""
Procedural 12x12 grayscale images with two independent binary attributes.

    shape  : 0 = square, 1 = disc   (drawn around the centre of the lower 10 rows)
    stripe : 0 = absent, 1 = present (a horizontal band over the top two rows)

The two attributes never share a pixel: the shape's footprint stays below
row 1 for every nuisance draw, so each attribute has its own region and
edits to one can be scored on the other's pixels.

Nuisance parameters per image: centre jitter in {-1, 0, 1} px on each axis,
radius (disc) or half-side (square) uniform in [3, 5) px, background level
in [0, 0.1), foreground and stripe levels in [0.7, 1.0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SIZE = 12
STRIPE_ROWS = (0, 1)
CENTER = (7, 6)
ATTRIBUTES = ("shape", "stripe")
SHAPE_NAMES = ("square", "disc")
STRIPE_NAMES = ("absent", "present")


@dataclass
class ShapesDataset:
    images: np.ndarray  # (n, 12, 12) in [0, 1]
    shape: np.ndarray  # (n,) 0 square / 1 disc
    stripe: np.ndarray  # (n,) 0 absent / 1 present
    shape_masks: np.ndarray  # (n, 12, 12) bool, pixels drawn with the foreground level
    stripe_masks: np.ndarray  # (n, 12, 12) bool, pixels drawn with the stripe level
    meta: pd.DataFrame = field(repr=False)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.images)

    @property
    def combo(self) -> np.ndarray:
        """Attribute combination id 2 * shape + stripe, used for stratification."""
        return 2 * self.shape + self.stripe

    @property
    def strata(self) -> np.ndarray:
        return self.combo

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def labels(self, attribute: str) -> np.ndarray:
        if attribute == "shape":
            return self.shape
        if attribute == "stripe":
            return self.stripe
        if attribute == "combo":
            return self.combo
        raise ValueError(f"unknown attribute {attribute!r}; expected one of {ATTRIBUTES + ('combo',)}")

    def region(self, attribute: str) -> np.ndarray:
        """(n, 12, 12) bool: pixels an edit of `attribute` may legitimately change.

        Stripe: the fixed top band. Shape: the square footprint at the
        image's centre and size (a disc of the same radius lies inside it).
        """
        if attribute == "stripe":
            band = np.zeros((SIZE, SIZE), dtype=bool)
            band[list(STRIPE_ROWS), :] = True
            return np.broadcast_to(band, self.images.shape).copy()
        if attribute == "shape":
            yy, xx = np.mgrid[0:SIZE, 0:SIZE]
            cy = self.meta["center_y"].to_numpy()[:, None, None]
            cx = self.meta["center_x"].to_numpy()[:, None, None]
            r = self.meta["radius"].to_numpy()[:, None, None]
            return np.maximum(np.abs(yy - cy), np.abs(xx - cx)) < r
        raise ValueError(f"unknown attribute {attribute!r}; expected one of {ATTRIBUTES}")

    def subset(self, idx: np.ndarray) -> "ShapesDataset":
        idx = np.asarray(idx, dtype=int)
        return ShapesDataset(
            images=self.images[idx],
            shape=self.shape[idx],
            stripe=self.stripe[idx],
            shape_masks=self.shape_masks[idx],
            stripe_masks=self.stripe_masks[idx],
            meta=self.meta.iloc[idx].reset_index(drop=True),
            seed=self.seed,
        )


def draw_shape(kind: int, cy: int, cx: int, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    dy, dx = yy - cy, xx - cx
    if kind == 0:
        return np.maximum(np.abs(dy), np.abs(dx)) < r
    return dy * dy + dx * dx < r * r


def gen_shapes(n: int, seed: int = 0) -> ShapesDataset:
    """Balanced dataset: each of the four (shape, stripe) combinations occurs n/4 times.

    Args:
        n: number of images, a multiple of 4.
        seed: generator seed; the output is a pure function of (n, seed).
    """
    if n < 0 or n % 4 != 0:
        raise ValueError(f"gen_shapes needs n divisible by 4 (one slot per attribute combination), got {n}")
    rng = np.random.default_rng(seed)
    combos = rng.permutation(np.tile(np.arange(4), n // 4))
    shape = combos // 2
    stripe = combos % 2

    jitter = rng.integers(-1, 2, size=(n, 2))
    radius = rng.uniform(3.0, 5.0, size=n)
    background = rng.uniform(0.0, 0.1, size=n)
    foreground = rng.uniform(0.7, 1.0, size=n)
    stripe_level = rng.uniform(0.7, 1.0, size=n)

    images = np.empty((n, SIZE, SIZE))
    shape_masks = np.zeros((n, SIZE, SIZE), dtype=bool)
    stripe_masks = np.zeros((n, SIZE, SIZE), dtype=bool)
    cy = CENTER[0] + jitter[:, 0]
    cx = CENTER[1] + jitter[:, 1]
    for i in range(n):
        img = np.full((SIZE, SIZE), background[i])
        mask = draw_shape(int(shape[i]), int(cy[i]), int(cx[i]), float(radius[i]))
        img[mask] = foreground[i]
        shape_masks[i] = mask
        if stripe[i]:
            stripe_masks[i, list(STRIPE_ROWS), :] = True
            img[stripe_masks[i]] = stripe_level[i]
        images[i] = img

    meta = pd.DataFrame(
        {
            "index": np.arange(n),
            "shape": shape,
            "stripe": stripe,
            "center_y": cy,
            "center_x": cx,
            "radius": radius,
            "background": background,
            "foreground": foreground,
            "stripe_level": stripe_level,
        }
    )
    logger.debug(f"gen_shapes: {n} images, seed={seed}")
    return ShapesDataset(images, shape, stripe, shape_masks, stripe_masks, meta, seed)
