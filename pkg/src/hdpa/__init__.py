"""Signal-dimension estimation by predictor augmentation in high dimensions."""

__version__ = "0.1.0"

from .asymptotics import (  # noqa: E402
    AspectRatios,
    SpikedModel,
    cnorm_limit,
    h_jump_limit,
    inconsistency_boundary,
    phi_limit,
)
from .estimators import EstimateReport, debias, estimate_sigma2, hdpa_estimate, pa_estimate  # noqa: E402
from .mp_dist import MpLaw, mp_cdf, mp_pdf, mp_quantile  # noqa: E402
from .spectral import RngSeed, augmented_spectrum  # noqa: E402

__all__ = [
    "AspectRatios",
    "EstimateReport",
    "MpLaw",
    "RngSeed",
    "SpikedModel",
    "augmented_spectrum",
    "cnorm_limit",
    "debias",
    "estimate_sigma2",
    "h_jump_limit",
    "hdpa_estimate",
    "inconsistency_boundary",
    "mp_cdf",
    "mp_pdf",
    "mp_quantile",
    "pa_estimate",
    "phi_limit",
]
