import numpy as np
import pytest

from sar_despeckler.image_core import Image
from sar_despeckler.simulation import PhantomSpec, SpeckleSpec, apply_speckle, generate_phantom


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def speckled_phantom(size: int, seed: int, looks: float = 1.0, kind: str = "shapes") -> Image:
    clean = generate_phantom(PhantomSpec(kind=kind, size=size, seed=seed))
    return apply_speckle(clean, SpeckleSpec(looks=looks, seed=seed))


@pytest.fixture
def small_speckled():
    return speckled_phantom(16, seed=7)


@pytest.fixture
def random_image(rng):
    def make(width: int, height: int, scale: float = 10.0) -> Image:
        return Image.from_array(rng.uniform(0.0, scale, size=(height, width)))

    return make


@pytest.fixture
def make_speckled():
    return speckled_phantom
