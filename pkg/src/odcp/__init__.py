"""Online change-point detection for compositional time series.

Segments are modelled as i.i.d. Dirichlet samples; a likelihood-ratio scan
locates the most likely split of an active window and a resampling test
decides whether to accept it. General multivariate data are mapped onto the
simplex first (:mod:`odcp.transform`).

Set ``ODCP_DISABLE_NUMBA=1`` before import to run the pure-numpy kernels.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .detector import (
    ChangePointReport,
    DetectorConfig,
    GeneralOnlineDetector,
    OnlineDetector,
    detect,
    feed,
    scan_window,
    significance,
)
from .dirichlet import DirichletParams, SufficientStats, fit_mle, kl_dirichlet, log_likelihood, log_pdf
from .simplex import SegmentLabeling, Series, clamp_to_interior, validate_series
from .transform import Standardization, fit_standardization, to_compositional

__all__ = [
    "__version__",
    "BACKEND",
    "ChangePointReport",
    "DetectorConfig",
    "GeneralOnlineDetector",
    "DirichletParams",
    "OnlineDetector",
    "SegmentLabeling",
    "Series",
    "Standardization",
    "SufficientStats",
    "clamp_to_interior",
    "detect",
    "feed",
    "fit_mle",
    "fit_standardization",
    "kl_dirichlet",
    "log_likelihood",
    "log_pdf",
    "scan_window",
    "significance",
    "to_compositional",
    "validate_series",
]
