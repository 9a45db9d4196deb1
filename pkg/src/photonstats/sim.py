"""Quantum-jump simulation of a pulsed two-level emitter and synthetic detection.

The pulse is discretised into ``n_steps`` steps of ``dt = T_p / n_steps``. The
no-jump evolution under ``H_eff = Omega(t)/2 sigma_x - i Gamma/2 |e><e|`` is
tabulated once per configuration: ``norm2[j, k]`` is the squared norm at grid
point ``k`` of a trajectory reset to the ground state at grid point ``j``. A
trajectory then needs only one uniform per jump (waiting-time form of the
jump method): it jumps at the first grid point where the norm falls below the
draw. After the pulse the normalised excited population decides whether one
last photon is emitted, at ``T_p + Exp(tau)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.linalg import expm

from . import rng
from .errors import ValidationError
from .photon_number import PhotonNumberDist
from .timetag import CLOCK, DEFAULT_CLOCK_PERIOD, TimeTagStream

N_STEPS = 1000
MAX_PHOTONS = 4


@dataclass(frozen=True)
class EmitterConfig:
    pulse_area: float = math.pi
    pulse_duration: float = 15.0
    pulse_shape: str = "square"
    lifetime: float = 204.0
    repetition_period: int = DEFAULT_CLOCK_PERIOD
    n_pulses: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (self.pulse_area >= 0 and math.isfinite(self.pulse_area)):
            raise ValidationError("pulse_area must be a finite non-negative number")
        if not self.pulse_duration > 0:
            raise ValidationError("pulse_duration must be positive")
        if self.pulse_duration >= 0.1 * self.repetition_period:
            raise ValidationError("pulse_duration must be much shorter than repetition_period")
        if self.pulse_shape not in ("square", "gaussian"):
            raise ValidationError(f"pulse_shape must be 'square' or 'gaussian', got {self.pulse_shape!r}")
        if not self.lifetime > 0:
            raise ValidationError("lifetime must be positive")
        if self.repetition_period <= 0:
            raise ValidationError("repetition_period must be positive")
        if self.n_pulses < 0:
            raise ValidationError("n_pulses must be non-negative")


@dataclass(frozen=True)
class DetectionConfig:
    """Loss, beam splitting, timing jitter and background of the detection chain.

    ``offset`` (ps) places the pulse start relative to the clock edge; with the
    default 50 ps jitter and a 204 ps lifetime, 140 ps puts the lifetime peak
    close to 200 ps after the edge.
    """

    eta_t: float = 0.25
    n_detectors: int = 4
    splitting: tuple[float, ...] | None = None
    jitter_sigma: float = 50.0
    background_rate: float = 0.0
    offset: float = 140.0

    def __post_init__(self):
        if not 0.0 <= self.eta_t <= 1.0:
            raise ValidationError(f"eta_t must lie in [0, 1], got {self.eta_t}")
        if not 1 <= self.n_detectors <= 4:
            raise ValidationError("n_detectors must be 1..4")
        split = self.splitting
        if split is None:
            split = (1.0 / self.n_detectors,) * self.n_detectors
        split = tuple(float(s) for s in split)
        if len(split) != self.n_detectors:
            raise ValidationError("splitting must have one entry per detector")
        if any(s < 0 for s in split) or abs(sum(split) - 1.0) > 1e-12:
            raise ValidationError("splitting must be non-negative and sum to 1")
        object.__setattr__(self, "splitting", split)
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be non-negative")
        if self.background_rate < 0:
            raise ValidationError("background_rate must be non-negative")
        if self.offset < 0:
            raise ValidationError("offset must be non-negative")


@dataclass(frozen=True)
class EmissionRecord:
    pulse_index: int
    emission_times: tuple[float, ...]


@dataclass(frozen=True)
class EmissionRecords:
    """Emissions of many pulses in flat form.

    ``times[starts[i]:starts[i] + counts[i]]`` are the emission times (ps from
    pulse start) of pulse ``i``. Indexing yields :class:`EmissionRecord`.
    """

    counts: np.ndarray
    times: np.ndarray
    lifetime: float = 204.0
    starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        starts = np.zeros(self.counts.size, dtype=np.int64)
        np.cumsum(self.counts[:-1], out=starts[1:])
        object.__setattr__(self, "starts", starts)

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[float]], lifetime: float = 204.0) -> "EmissionRecords":
        counts = np.array([len(x) for x in lists], dtype=np.int64)
        flat = [t for x in lists for t in x]
        return cls(counts, np.array(flat, dtype=np.float64), lifetime)

    def __len__(self) -> int:
        return self.counts.size

    def __getitem__(self, i: int) -> EmissionRecord:
        if i < 0:
            i += len(self)
        s = self.starts[i]
        return EmissionRecord(i, tuple(self.times[s:s + self.counts[i]].tolist()))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def pulse_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.counts.size, dtype=np.int64), self.counts)

    def slots(self) -> np.ndarray:
        """Index of each emission within its pulse."""
        return np.arange(self.times.size, dtype=np.int64) - np.repeat(self.starts, self.counts)

    def first_emission_times(self) -> np.ndarray:
        """First emission time of every non-empty pulse."""
        return self.times[self.starts[self.counts > 0]]


def rabi_envelope(config: EmitterConfig, n_steps: int = N_STEPS) -> np.ndarray:
    """Rabi frequency (rad/ps) at the midpoint of each step, normalised to the pulse area."""
    dt = config.pulse_duration / n_steps
    mid = (np.arange(n_steps) + 0.5) * dt
    if config.pulse_shape == "square":
        shape = np.ones(n_steps)
    else:
        # Gaussian truncated at +-3 sigma inside the pulse window
        sigma = config.pulse_duration / 6.0
        shape = np.exp(-0.5 * ((mid - 0.5 * config.pulse_duration) / sigma) ** 2)
    return config.pulse_area * shape / (shape.sum() * dt)


@dataclass(frozen=True)
class NoJumpTables:
    dt: float
    norm2: np.ndarray      # (n+1, n+1), rows: reset point, cols: grid point
    pe_end: np.ndarray     # normalised excited population at pulse end per reset point


def no_jump_tables(config: EmitterConfig, n_steps: int = N_STEPS) -> NoJumpTables:
    dt = config.pulse_duration / n_steps
    gamma = 1.0 / config.lifetime
    omega = rabi_envelope(config, n_steps)
    h = np.zeros((n_steps, 2, 2), dtype=np.complex128)
    h[:, 0, 1] = h[:, 1, 0] = omega / 2
    h[:, 1, 1] = -0.5j * gamma
    props = expm(-1j * h * dt)

    n = n_steps
    norm2 = np.zeros((n + 1, n + 1))
    psi = np.zeros((n + 1, 2), dtype=np.complex128)
    psi[:, 0] = 1.0
    norm2[np.arange(n + 1), np.arange(n + 1)] = 1.0
    for k in range(n):
        rows = slice(0, k + 1)
        psi[rows] = psi[rows] @ props[k].T
        norm2[rows, k + 1] = np.sum(np.abs(psi[rows]) ** 2, axis=1)
    pe_end = np.abs(psi[:, 1]) ** 2 / np.sum(np.abs(psi) ** 2, axis=1)
    pe_end[n] = 0.0
    # tiny float wobble must not break the monotone search
    norm2 = np.minimum.accumulate(np.where(np.triu(np.ones_like(norm2, dtype=bool)), norm2, 1.0), axis=1)
    return NoJumpTables(dt, norm2, pe_end)


@numba.njit(cache=True)
def _first_below(row, lo, r):
    """First index k > lo with row[k] <= r, or -1 when none. ``row`` is non-increasing."""
    n = row.shape[0] - 1
    if row[n] > r:
        return -1
    a = lo + 1
    b = n
    while a < b:
        mid = (a + b) // 2
        if row[mid] <= r:
            b = mid
        else:
            a = mid + 1
    return a


@numba.njit(cache=True)
def _pulse(p, norm2, pe_end, dt, t_p, tau, kj, kf, kd, out, write):
    n_em = 0
    j = 0
    while True:
        r = rng.uniform(kj, p, n_em)
        k = _first_below(norm2[j], j, r)
        if k < 0:
            break
        if write:
            out[n_em] = k * dt
        n_em += 1
        j = k
    if rng.uniform(kf, p, 0) < pe_end[j]:
        if write:
            out[n_em] = t_p + tau * rng.exponential(kd, p, 0)
        n_em += 1
    return n_em


@numba.njit(cache=True)
def _count_emissions(n_pulses, norm2, pe_end, dt, t_p, tau, kj, kf, kd):
    counts = np.empty(n_pulses, dtype=np.int64)
    dummy = np.empty(0)
    for p in range(n_pulses):
        counts[p] = _pulse(p, norm2, pe_end, dt, t_p, tau, kj, kf, kd, dummy, False)
    return counts


@numba.njit(cache=True)
def _fill_emissions(counts, starts, norm2, pe_end, dt, t_p, tau, kj, kf, kd, times):
    for p in range(counts.shape[0]):
        s = starts[p]
        _pulse(p, norm2, pe_end, dt, t_p, tau, kj, kf, kd, times[s:s + counts[p]], True)


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def simulate_emissions(config: EmitterConfig, tables: NoJumpTables | None = None) -> EmissionRecords:
    """Emission times for every pulse of ``config``; empty pulses are kept."""
    if tables is None:
        tables = no_jump_tables(config)
    s = _seed64(config.seed)
    keys = tuple(np.uint64(rng.stream_key(s, k)) for k in (rng.JUMP, rng.FINAL, rng.DECAY))
    args = (tables.norm2, tables.pe_end, tables.dt, float(config.pulse_duration), float(config.lifetime)) + keys
    counts = _count_emissions(config.n_pulses, *args)
    records = EmissionRecords(counts, np.empty(int(counts.sum())), float(config.lifetime))
    _fill_emissions(counts, records.starts, *args, records.times)
    return records


def photon_number_histogram(records: EmissionRecords) -> PhotonNumberDist:
    if len(records) == 0:
        raise ValidationError("no records")
    counts = np.bincount(np.minimum(records.counts, MAX_PHOTONS), minlength=MAX_PHOTONS + 1)
    truncated = bool(np.any(records.counts > MAX_PHOTONS))
    if truncated:
        warnings.warn("pulses with more than 4 photons folded into p4", RuntimeWarning, stacklevel=2)
    return PhotonNumberDist(tuple(counts / len(records)), "source", truncated=truncated)


@numba.njit(cache=True)
def _detect_kernel(pulse_idx, slots, em_times, eta, cum_split, jitter, period, offset, seed):
    kl = rng.stream_key(seed, rng.LOSS)
    kr = rng.stream_key(seed, rng.ROUTE)
    kj = rng.stream_key(seed, rng.JITTER)
    n = em_times.shape[0]
    out_t = np.empty(n, dtype=np.int64)
    out_c = np.empty(n, dtype=np.uint16)
    m = 0
    for i in range(n):
        p = pulse_idx[i]
        s = slots[i]
        if rng.uniform(kl, p, s) >= eta:
            continue
        u = rng.uniform(kr, p, s)
        ch = 1
        while ch < cum_split.shape[0] and u >= cum_split[ch - 1]:
            ch += 1
        t = p * period + offset + em_times[i]
        if jitter > 0.0:
            t += jitter * rng.normal(kj, p, s)
        ti = np.int64(np.floor(t + 0.5))
        out_t[m] = ti if ti > 0 else 0
        out_c[m] = ch
        m += 1
    return out_t[:m], out_c[:m]


@numba.njit(cache=True)
def _background_kernel(n_periods, lam, n_det, period, seed):
    key = rng.stream_key(seed, rng.BACKGROUND)
    total = 0
    counts = np.empty(n_periods, dtype=np.int64)
    for p in range(n_periods):
        counts[p] = rng.poisson(key, p, 0, lam)
        total += counts[p]
    out_t = np.empty(total, dtype=np.int64)
    out_c = np.empty(total, dtype=np.uint16)
    m = 0
    for p in range(n_periods):
        for j in range(counts[p]):
            u = rng.uniform(key, p, 1 + 2 * j)
            v = rng.uniform(key, p, 2 + 2 * j)
            out_t[m] = p * period + np.int64(u * period)
            out_c[m] = 1 + min(int(v * n_det), n_det - 1)
            m += 1
    return out_t, out_c


def detect(records: EmissionRecords, det: DetectionConfig, clock_period: int = DEFAULT_CLOCK_PERIOD,
           seed: int = 0) -> TimeTagStream:
    """Turn emissions into a detected time-tag stream (clock tags on channel 0)."""
    s = _seed64(seed)
    n_pulses = len(records)
    cum = np.cumsum(det.splitting)
    det_t, det_c = _detect_kernel(records.pulse_indices(), records.slots(), records.times,
                                  float(det.eta_t), cum, float(det.jitter_sigma),
                                  int(clock_period), float(det.offset), s)
    parts_t = [np.arange(n_pulses, dtype=np.int64) * clock_period, det_t]
    parts_c = [np.full(n_pulses, CLOCK, dtype=np.uint16), det_c]
    if det.background_rate > 0:
        lam = det.background_rate * clock_period * 1e-12
        bt, bc = _background_kernel(n_pulses, lam, det.n_detectors, int(clock_period), s)
        parts_t.append(bt)
        parts_c.append(bc)
    return TimeTagStream.from_unsorted(np.concatenate(parts_t), np.concatenate(parts_c),
                                       clock_period, det.n_detectors)


@numba.njit(cache=True)
def _reference_counts(n_pulses, kind, param, seed):
    key = rng.stream_key(seed, rng.REF_COUNT)
    counts = np.empty(n_pulses, dtype=np.int64)
    for p in range(n_pulses):
        if kind == 0:
            counts[p] = rng.poisson(key, p, 0, param)
        elif kind == 1:
            counts[p] = rng.geometric(key, p, 0, param)
        else:
            counts[p] = np.int64(param)
    return counts


@numba.njit(cache=True)
def _reference_times(counts, starts, tau, seed, times):
    key = rng.stream_key(seed, rng.REF_TIME)
    for p in range(counts.shape[0]):
        for j in range(counts[p]):
            times[starts[p] + j] = tau * rng.exponential(key, p, j)
        # keep the per-record ordering invariant
        times[starts[p]:starts[p] + counts[p]].sort()


SOURCE_KINDS = {"coherent": 0, "thermal": 1, "fock": 2}


def reference_emissions(source: str, param: float, n_pulses: int, seed: int = 0,
                        lifetime: float = 204.0) -> EmissionRecords:
    """Poisson (coherent), geometric (thermal) or fixed (fock) photon numbers per pulse."""
    if source not in SOURCE_KINDS:
        raise ValidationError(f"unknown reference source {source!r}")
    if param < 0:
        raise ValidationError("source parameter must be non-negative")
    if source == "fock" and param != int(param):
        raise ValidationError("fock source needs an integer photon number")
    s = _seed64(seed)
    counts = _reference_counts(n_pulses, SOURCE_KINDS[source], float(param), s)
    rec = EmissionRecords(counts, np.empty(int(counts.sum())), lifetime)
    _reference_times(counts, rec.starts, float(lifetime), s, rec.times)
    return rec


def simulate_reference(source: str, param: float, n_pulses: int, det: DetectionConfig,
                       seed: int = 0, clock_period: int = DEFAULT_CLOCK_PERIOD,
                       lifetime: float = 204.0) -> TimeTagStream:
    records = reference_emissions(source, param, n_pulses, seed, lifetime)
    return detect(records, det, clock_period, seed)


def simulate(config: EmitterConfig, det: DetectionConfig) -> tuple[EmissionRecords, TimeTagStream]:
    records = simulate_emissions(config)
    return records, detect(records, det, config.repetition_period, config.seed)
