"""Composed analyses: stream to g^(m)(0) estimates to photon-number distributions."""

from __future__ import annotations

from dataclasses import dataclass

from .correlator import DEFAULT_WINDOW, GEstimate, build_histogram, g_zero, integrate_peaks
from .photon_number import MomentSet, PhotonNumberReport, brightness, extract
from .timetag import TimeTagStream

# Peak integrals only need bins no wider than the half window; coarse bins keep
# the third- and fourth-order histograms small.
BIN_WIDTH = {2: 100, 3: 250, 4: 500}
PERIODS = {2: 10, 3: 10, 4: 16}


@dataclass(frozen=True)
class StreamMoments:
    estimates: dict[int, GEstimate]
    B_prime: float
    sigma_B: float

    def moment_set(self) -> MomentSet:
        e = self.estimates
        return MomentSet.from_estimates(e[2], e[3], e[4], self.B_prime, self.sigma_B)


def g_estimate(stream: TimeTagStream, m: int, window: int = DEFAULT_WINDOW,
               bin_width: int | None = None, max_delay: int | None = None,
               channels=None) -> GEstimate:
    bw = bin_width or BIN_WIDTH[m]
    if max_delay is None:
        max_delay = PERIODS[m] * stream.clock_period
    if channels is None:
        channels = tuple(range(1, m + 1))
    h = build_histogram(stream, m, bw, max_delay, channels)
    return g_zero(h, window, integrate_peaks(h, window))


def stream_moments(stream: TimeTagStream, window: int = DEFAULT_WINDOW) -> StreamMoments:
    est = {m: g_estimate(stream, m, window) for m in (2, 3, 4)}
    b, sb = brightness(stream)
    return StreamMoments(est, b, sb)


def photon_numbers(stream: TimeTagStream, eta: float | None = None,
                   window: int = DEFAULT_WINDOW) -> tuple[StreamMoments, PhotonNumberReport]:
    sm = stream_moments(stream, window)
    return sm, extract(sm.moment_set(), eta)
