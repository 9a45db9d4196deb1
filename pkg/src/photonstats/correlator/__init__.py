"""Coincidence histograms, peak normalisation, lifetime fits and gated scans."""

from .gating import GatePoint, count_rate, gated_g2_scan
from .histogram import CorrelationHistogram, build_histogram
from .lifetime import LifetimeFit, LifetimeHistogram, fit_lifetime, lifetime_histogram
from .peaks import (DEFAULT_WINDOW, GEstimate, classify_peaks, g_lower_order_slices, g_zero,
                    integrate_peaks, is_uncorrelated, partition, partition_label)
from .stats import poisson_interval, ratio_sigma, uncorrelated_sigma

__all__ = [
    "CorrelationHistogram", "DEFAULT_WINDOW", "GEstimate", "GatePoint", "LifetimeFit",
    "LifetimeHistogram", "build_histogram", "classify_peaks", "count_rate", "fit_lifetime",
    "g_lower_order_slices", "g_zero", "gated_g2_scan", "integrate_peaks", "is_uncorrelated",
    "lifetime_histogram", "partition", "partition_label", "poisson_interval", "ratio_sigma",
    "uncorrelated_sigma",
]
