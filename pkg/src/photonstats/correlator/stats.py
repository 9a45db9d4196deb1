"""Counting uncertainties for peak integrals."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaincinv

from ..errors import DataError, ValidationError

GAUSS_THRESHOLD = 100


def poisson_interval(n_c: int, cl: float = 0.683) -> tuple[float, float]:
    """(sigma_low, sigma_up) of a Poisson count at confidence level ``cl``.

    Above 100 counts the Gaussian sqrt(N) is used. Otherwise the central
    Garwood interval: the bounds are the ``alpha/2`` and ``1-alpha/2`` quantiles
    of Gamma(N) and Gamma(N+1), i.e. half the chi-square quantiles with 2N and
    2N+2 degrees of freedom, found by inverting the regularised incomplete
    gamma function.
    """
    if not 0.0 < cl < 1.0:
        raise ValidationError(f"confidence level must lie in (0, 1), got {cl}")
    if n_c < 0 or int(n_c) != n_c:
        raise ValidationError("count must be a non-negative integer")
    n_c = int(n_c)
    if n_c > GAUSS_THRESHOLD:
        s = math.sqrt(n_c)
        return s, s
    alpha = 1.0 - cl
    lower = 0.0 if n_c == 0 else float(gammaincinv(n_c, alpha / 2))
    upper = float(gammaincinv(n_c + 1, 1.0 - alpha / 2))
    return n_c - lower, upper - n_c


def uncorrelated_sigma(peaks) -> float:
    """Standard error of the mean uncorrelated peak (sample stdev / sqrt(n))."""
    x = np.asarray(peaks, dtype=float)
    if x.size < 2:
        raise DataError("need at least two uncorrelated peaks")
    return float(x.std(ddof=1) / math.sqrt(x.size))


def ratio_sigma(n_c: float, d_nc: float, n_u: float, d_nu: float) -> float:
    """Independent propagation for N_c / N_u."""
    return math.sqrt((d_nc / n_u) ** 2 + (n_c * d_nu / n_u ** 2) ** 2)
