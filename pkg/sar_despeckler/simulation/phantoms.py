"""
Piecewise-constant reflectivity phantoms for synthetic despeckling runs.

Every phantom is built from a label map: label k paints ``levels[k]``. The
label map is kept so diagnostics can score regions separately.
"""
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sar_despeckler.image_core import Image


class PhantomKind(str, Enum):
    SHAPES = "shapes"
    CHECKER = "checker"
    TEXT_LIKE = "text"


class PhantomSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PhantomKind = PhantomKind.SHAPES
    size: int = Field(default=256, ge=16)
    levels: Tuple[float, ...] = (50.0, 200.0, 120.0)
    seed: int = 0
    checker_block: Optional[int] = Field(default=None, ge=1)

    @field_validator("levels")
    @classmethod
    def _distinct_levels(cls, levels):
        if len(set(levels)) < 2:
            raise ValueError("a phantom needs at least 2 distinct levels")
        if any(not np.isfinite(v) for v in levels):
            raise ValueError("levels must be finite")
        return tuple(float(v) for v in levels)

    @model_validator(mode="after")
    def _block_fits(self):
        if self.checker_block is not None and self.checker_block > self.size:
            raise ValueError("checker_block cannot exceed the phantom size")
        return self


def _checker_labels(spec: PhantomSpec) -> np.ndarray:
    block = spec.checker_block or max(2, spec.size // 8)
    idx = np.arange(spec.size) // block
    parity = idx[:, None] + idx[None, :]
    return parity % len(spec.levels)


def _shapes_labels(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    labels = np.zeros((n, n), dtype=np.int64)
    foreground = list(range(1, len(spec.levels)))
    yy, xx = np.mgrid[0:n, 0:n]

    # pairs of bars with halving widths along the top band: edge-preservation targets
    band = max(2, n // 8)
    start = max(1, n // 16)
    widths = sorted({max(1, start >> s) for s in range(5)}, reverse=True)
    x = start
    for k, width in enumerate(widths):
        for _ in range(2):
            if x + width > n - 1:
                break
            labels[1:1 + band, x:x + width] = foreground[k % len(foreground)]
            x += 2 * width

    # random rectangles and ellipses below the band
    top = band + 2
    for i in range(6):
        label = foreground[i % len(foreground)]
        h = int(rng.integers(n // 10, n // 4 + 1))
        w = int(rng.integers(n // 10, n // 4 + 1))
        r0 = int(rng.integers(top, max(top + 1, n - h)))
        c0 = int(rng.integers(0, max(1, n - w)))
        if i % 2 == 0:
            labels[r0:r0 + h, c0:c0 + w] = label
        else:
            cy, cx = r0 + h / 2.0, c0 + w / 2.0
            inside = ((yy - cy) / (h / 2.0)) ** 2 + ((xx - cx) / (w / 2.0)) ** 2 <= 1.0
            labels[inside] = label

    # one guaranteed block per level so every requested level is present
    cell = max(2, n // 16)
    for j, label in enumerate(foreground):
        c0 = n - (j + 1) * (cell + 1)
        if c0 < 0:
            break
        labels[n - cell - 1:n - 1, c0:c0 + cell] = label
    return labels


def _text_labels(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    labels = np.zeros((n, n), dtype=np.int64)
    foreground = list(range(1, len(spec.levels)))
    scale = max(1, n // 64)
    glyph_h, glyph_w = 7 * scale, 5 * scale
    pitch_y, pitch_x = glyph_h + 3 * scale, glyph_w + 2 * scale

    count = 0
    for top in range(2 * scale, n - glyph_h - scale, pitch_y):
        for left in range(2 * scale, n - glyph_w - scale, pitch_x):
            # 5x7 glyph from random strokes: keep rows/columns so it reads as lettering
            glyph = np.zeros((7, 5), dtype=bool)
            glyph[rng.integers(0, 7, size=2), :] = True
            glyph[:, rng.integers(0, 5, size=2)] = True
            glyph &= rng.random((7, 5)) < 0.85
            label = foreground[count % len(foreground)]
            cells = np.kron(glyph, np.ones((scale, scale), dtype=bool))
            labels[top:top + glyph_h, left:left + glyph_w][cells] = label
            count += 1
    return labels


def generate_phantom_with_regions(spec: PhantomSpec) -> Tuple[Image, np.ndarray]:
    """
    Build a phantom image and its region label map.

    Args:
        spec: Phantom kind, size, levels and seed

    Returns:
        Tuple of (image, labels) where labels[r, c] indexes spec.levels
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind is PhantomKind.CHECKER:
        labels = _checker_labels(spec)
    elif spec.kind is PhantomKind.SHAPES:
        labels = _shapes_labels(spec, rng)
    else:
        labels = _text_labels(spec, rng)

    levels = np.asarray(spec.levels, dtype=np.float64)
    return Image.from_array(levels[labels]), labels


def generate_phantom(spec: PhantomSpec) -> Image:
    """Deterministic piecewise-constant phantom for ``spec``."""
    image, _ = generate_phantom_with_regions(spec)
    return image

