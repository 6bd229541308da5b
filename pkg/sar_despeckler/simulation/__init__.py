from sar_despeckler.simulation.metrics import MetricParams, snr_db, ssim
from sar_despeckler.simulation.phantoms import (
    PhantomKind,
    PhantomSpec,
    generate_phantom,
    generate_phantom_with_regions,
)
from sar_despeckler.simulation.speckle import SpeckleSpec, apply_speckle

__all__ = [
    "MetricParams",
    "PhantomKind",
    "PhantomSpec",
    "SpeckleSpec",
    "apply_speckle",
    "generate_phantom",
    "generate_phantom_with_regions",
    "snr_db",
    "ssim",
]
