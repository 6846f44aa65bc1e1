"""Isoperimetric profiles of rotationally symmetric metrics on S^2 under normalized Ricci flow."""

from .flow import FlowTrace, evolve, mean_curvature, step
from .geometry import (
    RotSymMetric,
    builtin_metric,
    curvature,
    geodesic_ball,
    gray_series,
    laplacian,
    round_metric,
    total_area,
)
from .profile import Region, band_oracle, comparability_check, profile_curve, profile_sample
from .verify import VerificationReport, VerifyConfig, run_all

__version__ = "0.1.0"
