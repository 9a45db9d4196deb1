"""Clock-referenced arrival histogram and mono-exponential decay fit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from ..errors import DataError, NumericalError, ValidationError
from ..timetag import CLOCK, TimeTagStream


@dataclass(frozen=True)
class LifetimeHistogram:
    bin_width: int
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


@dataclass(frozen=True)
class LifetimeFit:
    tau_hat: float
    amplitude: float
    offset: float
    residual_norm: float
    tau_sigma: float = float("nan")


def lifetime_histogram(stream: TimeTagStream, bin_width: int = 4) -> LifetimeHistogram:
    """Histogram of detector time minus the nearest preceding clock tag over [0, period)."""
    if bin_width <= 0:
        raise ValidationError("bin_width must be positive")
    clock = stream.channel_times(CLOCK)
    if clock.size == 0:
        raise DataError("no clock channel (0) in stream")
    det = stream.times[stream.detector_mask()]
    idx = np.searchsorted(clock, det, side="right") - 1
    ok = idx >= 0
    delay = det[ok] - clock[idx[ok]]
    P = stream.clock_period
    delay = delay[delay < P]
    edges = np.append(np.arange(0, P, bin_width, dtype=np.int64), P)
    counts = np.bincount(delay // bin_width, minlength=edges.size - 1)[: edges.size - 1]
    return LifetimeHistogram(bin_width, edges, counts.astype(np.int64))


def _model(t, a, tau, c):
    return a * np.exp(-t / tau) + c


def fit_lifetime(hist: LifetimeHistogram, fit_start: float | None = None,
                 max_iter: int = 2000) -> LifetimeFit:
    """Weighted least squares of ``A exp(-t/tau) + offset`` on bins after ``fit_start``.

    Weights are 1/max(count, 1). Without ``fit_start`` the fit begins 100 ps
    after the histogram maximum.
    """
    t = hist.centres
    y = hist.counts.astype(float)
    if fit_start is None:
        fit_start = t[int(np.argmax(y))] + 100.0
    sel = t >= fit_start
    if sel.sum() < 4:
        raise DataError("fewer than four bins after fit_start")
    t, y = t[sel], y[sel]
    if not y.any():
        raise DataError("degenerate tail: all bins empty")
    if y.max() == y.min():
        raise DataError("degenerate tail: flat histogram has no decay")
    t0 = t[0]
    tt = t - t0
    c0 = float(np.median(y[-max(len(y) // 10, 1):]))
    a0 = max(float(y[0] - c0), 1.0)
    above = np.flatnonzero(y - c0 < a0 / np.e)
    tau0 = float(tt[above[0]]) if above.size and tt[above[0]] > 0 else float(tt[-1] / 3)
    sigma = np.sqrt(np.maximum(y, 1.0))
    try:
        popt, pcov = curve_fit(_model, tt, y, p0=(a0, max(tau0, hist.bin_width), c0),
                               sigma=sigma, absolute_sigma=True, maxfev=max_iter,
                               bounds=([0.0, 1e-3, -np.inf], [np.inf, np.inf, np.inf]))
    except RuntimeError as exc:
        raise NumericalError(f"lifetime fit did not converge: {exc}") from exc
    a, tau, c = popt
    span = tt[-1] - tt[0]
    err = np.sqrt(np.diag(pcov))
    if not np.all(np.isfinite(err)) or a <= 3 * err[0] or tau > 100 * span:
        raise DataError("degenerate tail: no significant exponential component")
    resid = (y - _model(tt, *popt)) / sigma
    # amplitude referred back to t = 0 of the histogram
    return LifetimeFit(float(tau), float(a * np.exp(t0 / tau)), float(c),
                       float(np.linalg.norm(resid)), float(err[1]))
