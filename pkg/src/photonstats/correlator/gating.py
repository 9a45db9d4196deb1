"""g2(0) and count rate as a function of the gate opening time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..timetag import DEFAULT_T_STOP, GateWindow, TimeTagStream, apply_gate
from .histogram import build_histogram
from .peaks import DEFAULT_WINDOW, GEstimate, g_zero


@dataclass(frozen=True)
class GatePoint:
    t_start: int
    t_stop: int
    count_rate: float
    n_detected: int
    g2: GEstimate


def count_rate(stream: TimeTagStream) -> float:
    """Detector tags per second of acquisition."""
    t = stream.acquisition_time_s()
    if t <= 0:
        raise DataError("empty acquisition")
    return int(np.count_nonzero(stream.detector_mask())) / t


def gated_g2_scan(stream: TimeTagStream, t_starts, t_stop: int = DEFAULT_T_STOP,
                  bin_width: int = 100, window: int = DEFAULT_WINDOW,
                  channels=(1, 2), max_delay: int | None = None,
                  offset: int = 0) -> list[GatePoint]:
    if max_delay is None:
        max_delay = 10 * stream.clock_period
    out = []
    for ts in t_starts:
        gate = GateWindow(int(ts), int(t_stop))
        gated = apply_gate(stream, gate, offset)
        n_det = int(np.count_nonzero(gated.detector_mask()))
        try:
            h = build_histogram(gated, 2, bin_width, max_delay, channels)
            est = g_zero(h, window)
        except DataError as exc:
            raise DataError(f"t_start={ts} ps: {exc}") from exc
        out.append(GatePoint(gate.t_start, gate.t_stop, count_rate(gated), n_det, est))
    return out
