"""Wave-packet overlap, multi-photon corrected HOM visibility and gated visibility.

Overlap model: each photon is an exponential amplitude wave packet that starts
at its emission time, so two photons emitted ``dt`` apart overlap by
``exp(-|dt| / tau)``. The mean overlap ``M`` averages this over independent
pulses.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError, ValidationError
from .sim import EmissionRecords, EmitterConfig, NoJumpTables, no_jump_tables
from .timetag import GateWindow

MIN_PAIRS = 1000


@dataclass(frozen=True)
class HomReport:
    V_raw: float
    g2: float
    M: float
    gate: GateWindow | None = None
    V_gated: float | None = None
    count_rate: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gate"] = None if self.gate is None else [self.gate.t_start, self.gate.t_stop]
        return d


def emission_pairs(records: EmissionRecords) -> np.ndarray:
    """(n, 2) first-emission times of consecutive non-empty pulses, paired 0-1, 2-3, ..."""
    first = records.first_emission_times()
    n = first.size // 2
    return first[: 2 * n].reshape(n, 2)


def overlap_from_emission_times(samples, tau: float, t_start: float | None = None) -> float:
    """Mean ``exp(-|t_a - t_b| / tau)`` over emission-time pairs.

    With ``t_start`` only pairs where both photons arrive at or after
    ``t_start`` are kept.
    """
    if tau <= 0:
        raise ValidationError("tau must be positive")
    pairs = np.asarray(samples, dtype=float).reshape(-1, 2)
    if t_start is not None:
        pairs = pairs[np.all(pairs >= t_start, axis=1)]
        if pairs.shape[0] == 0:
            raise DataError(f"no pairs left after gating at {t_start} ps")
    elif pairs.shape[0] < MIN_PAIRS:
        raise DataError(f"need at least {MIN_PAIRS} pairs, got {pairs.shape[0]}")
    return float(np.mean(np.exp(-np.abs(pairs[:, 0] - pairs[:, 1]) / tau)))


def overlap_integral(weights: np.ndarray, step: float, tau: float) -> float:
    """``sum_ij w_i w_j exp(-|i-j| step / tau) / (sum w)^2`` on a uniform grid."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise DataError("empty density")
    auto = fftconvolve(w, w[::-1], mode="full")
    lag = np.abs(np.arange(-(w.size - 1), w.size)) * step
    return float(np.dot(np.clip(auto, 0.0, None), np.exp(-lag / tau)) / total ** 2)


def empirical_density(times: np.ndarray, step: float = 0.25, t_max: float | None = None) -> np.ndarray:
    """Histogram weights of emission times on a grid of width ``step`` from 0."""
    times = np.asarray(times, dtype=float)
    if t_max is None:
        t_max = float(times.max()) + step
    edges = np.arange(0.0, t_max + step, step)
    return np.histogram(times, bins=edges)[0].astype(float)


def first_emission_density(config: EmitterConfig, step: float = 0.25, n_tau: float = 40.0,
                           tables: NoJumpTables | None = None) -> np.ndarray:
    """Exact first-emission-time mass per grid bin of width ``step`` (not normalised).

    Jumps during the pulse come from the no-jump norm decay; pulses without a
    jump emit their first photon at ``T_p + Exp(tau)`` with the end-of-pulse
    excited population.
    """
    if tables is None:
        tables = no_jump_tables(config)
    norm0 = tables.norm2[0]
    n = norm0.size - 1
    t_p, tau = config.pulse_duration, config.lifetime
    edges = np.arange(0.0, t_p + n_tau * tau + step, step)
    w = np.zeros(edges.size - 1)
    jump_mass = norm0[:-1] - norm0[1:]
    jump_t = np.arange(1, n + 1) * tables.dt
    idx = np.minimum(np.searchsorted(edges, jump_t, side="right") - 1, w.size - 1)
    np.add.at(w, idx, jump_mass)
    tail = norm0[n] * tables.pe_end[0]
    cdf = np.where(edges >= t_p, 1.0 - np.exp(-(edges - t_p) / tau), 0.0)
    w += tail * np.diff(cdf)
    return w


def gated_model_overlap(config: EmitterConfig, t_start: float, step: float = 0.25,
                        density: np.ndarray | None = None) -> float:
    """Model-level M for photons whose first emission is at or after ``t_start``."""
    if density is None:
        density = first_emission_density(config, step)
    w = density.copy()
    w[: int(np.ceil(t_start / step - 1e-9))] = 0.0
    return overlap_integral(w, step, config.lifetime)


def correct_visibility(V_raw: float, g2: float) -> float:
    """Mean wave-packet overlap from raw visibility: ``(V + g2) / (1 - g2)``.

    Multi-photon correction for HOM with imperfect single-photon sources,
    treating the extra photons as distinguishable noise.
    """
    if not 0.0 <= g2 < 1.0:
        raise ValidationError(f"g2 must lie in [0, 1), got {g2}")
    if not -1.0 <= V_raw <= 1.0:
        raise ValidationError(f"V_raw must lie in [-1, 1], got {V_raw}")
    return (V_raw + g2) / (1.0 - g2)


def expected_visibility(M: float, g2: float) -> float:
    """Raw visibility expected for overlap ``M`` and multi-photon content ``g2``."""
    return M * (1.0 - g2) - g2


def visibility_from_counts(central: float, reference: float, pattern_factor: float = 2.0) -> float:
    if reference <= 0:
        raise DataError("reference counts must be positive")
    return 1.0 - pattern_factor * central / reference
