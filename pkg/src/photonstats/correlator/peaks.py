"""Peak integration on the pulse lattice and normalised correlation estimates.

A lattice point ``L`` (one integer per delay axis) is the peak centred at
``L * clock_period``. Because the axes are consecutive differences, the pulse
of channel ``i`` relative to channel 1 is the running sum of ``L``; channels
sharing a pulse form the blocks of the peak's partition. The all-zero peak is
a single block, uncorrelated peaks are all singletons, and mixed partitions
estimate lower-order correlations.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DataError, ValidationError
from .histogram import CorrelationHistogram
from .stats import poisson_interval, ratio_sigma, uncorrelated_sigma

DEFAULT_WINDOW = 3000
MIN_UNCORRELATED = 5


@dataclass(frozen=True)
class GEstimate:
    """N_c / (n_correlated_peaks * N_u_mean) with asymmetric 1-sigma errors."""

    value: float
    sigma_low: float
    sigma_up: float
    N_c: int
    N_u_mean: float
    n_uncorrelated_peaks: int
    n_correlated_peaks: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def sigma(self) -> float:
        return 0.5 * (self.sigma_low + self.sigma_up)

    def within(self, target: float, nsigma: float = 3.0) -> bool:
        s = self.sigma_up if target >= self.value else self.sigma_low
        return abs(target - self.value) <= nsigma * s


def partition(lattice) -> tuple[tuple[int, ...], ...]:
    """Channels (1-based) grouped by the pulse they fall in, blocks ordered by first member."""
    offsets = np.concatenate([[0], np.cumsum(lattice)])
    blocks: dict[int, list[int]] = {}
    for ch, o in enumerate(offsets.tolist(), start=1):
        blocks.setdefault(o, []).append(ch)
    return tuple(sorted(tuple(b) for b in blocks.values()))


def partition_label(part) -> str:
    return "|".join("".join(str(c) for c in block) for block in part)


def is_uncorrelated(lattice) -> bool:
    return all(len(b) == 1 for b in partition(lattice))


def _valid_lattice(h: CorrelationHistogram, window: int) -> np.ndarray:
    """Lattice indices whose whole integration window lies inside the histogram range."""
    P, bw, half = h.clock_period, h.bin_width, h.bin_width // 2
    top = h.max_delay // P + 1
    L = np.arange(-top, top + 1)
    ok = (2 * L * P - window >= -2 * h.max_delay - 2 * half) & (
        2 * L * P + window < 2 * h.max_delay - 2 * half + 2 * bw)
    return L[ok]


def integrate_peaks(h: CorrelationHistogram, window: int = DEFAULT_WINDOW) -> dict[tuple[int, ...], int]:
    """Counts per lattice peak, summing bins whose centre is within ``window/2`` of it.

    Only peaks whose full window is covered by the histogram are returned;
    empty peaks are included with zero counts.
    """
    P = h.clock_period
    if window <= 0:
        raise ValidationError("window must be positive")
    if window > P:
        raise ValidationError(f"window {window} ps exceeds clock period {P} ps: peaks would overlap")
    valid = _valid_lattice(h, window)
    if valid.size == 0:
        raise DataError("no complete peak fits in the histogram range")
    peaks = {lat: 0 for lat in itertools.product(valid.tolist(), repeat=h.n_axes)}
    coords, counts = h.nonzero()
    if counts.size == 0:
        return peaks
    centre = coords * h.bin_width
    lat = np.floor_divide(2 * centre + P, 2 * P)
    inside = np.all(2 * np.abs(centre - lat * P) <= window, axis=1)
    inside &= np.all((lat >= valid[0]) & (lat <= valid[-1]), axis=1)
    lat, cnt = lat[inside], counts[inside]
    if cnt.size:
        uniq, inv = np.unique(lat, axis=0, return_inverse=True)
        sums = np.zeros(uniq.shape[0], dtype=np.int64)
        np.add.at(sums, inv.reshape(-1), cnt)
        for u, s in zip(map(tuple, uniq.tolist()), sums.tolist()):
            peaks[u] = s
    return peaks


def classify_peaks(peaks: dict) -> dict[str, list[int]]:
    """Group peak integrals by partition label."""
    out: dict[str, list[int]] = {}
    for lat, n in peaks.items():
        out.setdefault(partition_label(partition(lat)), []).append(n)
    return out


def _uncorrelated(peaks: dict) -> np.ndarray:
    return np.array([n for lat, n in peaks.items() if is_uncorrelated(lat)], dtype=float)


def _estimate(n_c: int, unc: np.ndarray, n_corr: int = 1, cl: float = 0.683) -> GEstimate:
    if unc.size < MIN_UNCORRELATED:
        raise DataError(f"only {unc.size} uncorrelated peaks in range, need {MIN_UNCORRELATED}")
    n_u = float(unc.mean())
    if n_u == 0:
        raise DataError("no uncorrelated counts: cannot normalise")
    d_nu = uncorrelated_sigma(unc)
    d_low, d_up = poisson_interval(int(n_c), cl)
    scale = n_corr * n_u
    return GEstimate(
        value=n_c / scale,
        sigma_low=ratio_sigma(n_c, d_low, scale, n_corr * d_nu),
        sigma_up=ratio_sigma(n_c, d_up, scale, n_corr * d_nu),
        N_c=int(n_c),
        N_u_mean=n_u,
        n_uncorrelated_peaks=int(unc.size),
        n_correlated_peaks=n_corr,
    )


def g_zero(h: CorrelationHistogram, window: int = DEFAULT_WINDOW,
           peaks: dict | None = None) -> GEstimate:
    """g^(m)(0): the zero-delay peak over the mean uncorrelated peak."""
    if peaks is None:
        peaks = integrate_peaks(h, window)
    zero = (0,) * h.n_axes
    return _estimate(peaks[zero], _uncorrelated(peaks))


# lower-order quantity estimated by each partition shape (sorted block sizes)
_SHAPES = {
    (1, 2): "g2",
    (1, 3): "g3",
    (2, 2): "g2^2",
    (1, 1, 2): "g2",
}


def g_lower_order_slices(h: CorrelationHistogram, window: int = DEFAULT_WINDOW,
                         peaks: dict | None = None) -> dict[str, GEstimate]:
    """Lower-order correlations from peaks where only some channels coincide.

    Keys are ``"<quantity>[<partition>]"`` for each partition (e.g.
    ``"g2[12|3]"``) plus pooled ``"<quantity>"`` entries over all partitions
    of the same shape.
    """
    if h.order < 3:
        raise ValidationError("slices need order >= 3")
    if peaks is None:
        peaks = integrate_peaks(h, window)
    unc = _uncorrelated(peaks)
    groups: dict[str, list[int]] = {}
    for lat, n in peaks.items():
        part = partition(lat)
        shape = tuple(sorted(len(b) for b in part))
        if shape not in _SHAPES:
            continue
        q = _SHAPES[shape]
        groups.setdefault(f"{q}[{partition_label(part)}]", []).append(n)
        groups.setdefault(q, []).append(n)
    out = {}
    for label, counts in sorted(groups.items()):
        if not counts:
            raise DataError(f"no peaks on slice {label}")
        out[label] = _estimate(int(sum(counts)), unc, n_corr=len(counts))
    return out
