"""Multiplicative L-look intensity speckle: g = f * n, n ~ Gamma(L, 1/L)."""
from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from sar_despeckler.exceptions import InvalidParameterError
from sar_despeckler.image_core import Image


class SpeckleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    looks: float = Field(default=1.0, gt=0, description="number of looks L; 1 = exponential speckle")
    seed: int = 0


def gamma_speckle_field(size: int, looks: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean Gamma(L, 1/L) samples: E[n] = 1, Var[n] = 1/L."""
    if not looks > 0:
        raise InvalidParameterError(f"looks must be > 0, got {looks}")
    return rng.gamma(shape=looks, scale=1.0 / looks, size=size)


def apply_speckle(clean: Image, spec: SpeckleSpec) -> Image:
    """
    Multiply ``clean`` by independent unit-mean Gamma speckle.

    Args:
        clean: Nonnegative reflectivity image
        spec: Number of looks and seed

    Returns:
        Speckled image, bit-identical for a fixed seed
    """
    if np.any(clean.pixels < 0):
        raise InvalidParameterError("speckle simulation needs nonnegative clean pixels")
    rng = np.random.default_rng(spec.seed)
    noise = gamma_speckle_field(clean.size, spec.looks, rng)
    return clean.with_pixels(clean.pixels * noise)
