"""Ring-array photoacoustic tomography reconstruction.

Forward model, universal back-projection, model-based TV-regularized
inversion, and a self-supervised neural-field method, plus phantoms,
metrics, file formats and an experiment runner.
"""

from .core import (
    Acquisition,
    HeatImage,
    ImageGrid,
    Medium,
    RingGeometry,
    Sinogram,
    subsample_projections,
)
from .forward import (
    ArcSamplingConfig,
    ForwardOperator,
    MemoryBudgetError,
    arc_point_weights,
    arc_points,
    opening_angle,
    segment_lengths,
)
from .mb import MbConfig, MbResult, mb_reconstruct, tv_gradient, tv_value
from .metrics import Rect, RegionSpec, cnr, normalize01, psnr, snr, ssim
from .phantom import PhantomSpec, rasterize, synthesize_sinogram
from .ubp import UbpConfig, ubp_reconstruct

__version__ = "0.1.0"

__all__ = [
    "Acquisition",
    "HeatImage",
    "ImageGrid",
    "Medium",
    "RingGeometry",
    "Sinogram",
    "subsample_projections",
    "ArcSamplingConfig",
    "ForwardOperator",
    "MemoryBudgetError",
    "opening_angle",
    "arc_points",
    "arc_point_weights",
    "segment_lengths",
    "UbpConfig",
    "ubp_reconstruct",
    "MbConfig",
    "MbResult",
    "mb_reconstruct",
    "tv_value",
    "tv_gradient",
    "PhantomSpec",
    "rasterize",
    "synthesize_sinogram",
    "Rect",
    "RegionSpec",
    "ssim",
    "psnr",
    "snr",
    "cnr",
    "normalize01",
    "__version__",
]
