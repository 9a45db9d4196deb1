"""Photon-number probabilities from correlation moments, binomial loss and purities.

Distributions are truncated at four photons. The detected distribution is
recovered from (g2, g3, g4, B') by parametrising with the mean photon number
mu: given mu the factorial moments fix p4, p3, p2, p1 top-down, and mu is the
smallest root of ``p1 + p2 + p3 + p4 = B'`` in (0, 4] that gives a valid
distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import comb

from .errors import DataError, NumericalError, ValidationError
from .timetag import CLOCK, TimeTagStream

NMAX = 4
NEG_TOL = 1e-6
SUM_TOL = 1e-9


@dataclass(frozen=True)
class PhotonNumberDist:
    """Probabilities p0..p4 at source or detector level."""

    p: tuple[float, ...]
    level: str = "source"
    eta_applied: float | None = None
    truncated: bool = False
    sigma: tuple[float, ...] | None = None

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != NMAX + 1:
            raise ValidationError("need exactly five probabilities p0..p4")
        if any(x < -SUM_TOL or x > 1 + SUM_TOL for x in p) or abs(sum(p) - 1.0) > SUM_TOL:
            raise ValidationError(f"not a probability distribution: {p}")
        object.__setattr__(self, "p", p)
        if self.level not in ("source", "detected"):
            raise ValidationError("level must be 'source' or 'detected'")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.p)

    def mean(self) -> float:
        return float(np.dot(np.arange(NMAX + 1), self.p))

    def g(self, m: int) -> float:
        """g^(m)(0) from the factorial moments of this distribution."""
        return factorial_moment(self.p, m) / self.mean() ** m


@dataclass(frozen=True)
class MomentSet:
    g2: float
    g3: float
    g4: float
    B_prime: float
    sigma_g2: float = 0.0
    sigma_g3: float = 0.0
    sigma_g4: float = 0.0
    sigma_B: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.B_prime <= 1.0:
            raise ValidationError(f"B_prime must lie in (0, 1], got {self.B_prime}")
        if min(self.g2, self.g3, self.g4) < 0:
            raise ValidationError("correlation values must be non-negative")

    @property
    def values(self) -> np.ndarray:
        return np.array([self.g2, self.g3, self.g4, self.B_prime])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_g2, self.sigma_g3, self.sigma_g4, self.sigma_B])

    @classmethod
    def from_estimates(cls, g2, g3, g4, B_prime: float, sigma_B: float = 0.0) -> "MomentSet":
        """Build from three GEstimates; asymmetric errors are symmetrised by their mean."""
        def sym(e):
            return 0.5 * (e.sigma_low + e.sigma_up)
        return cls(g2.value, g3.value, g4.value, B_prime, sym(g2), sym(g3), sym(g4), sigma_B)


def factorial_moment(p, m: int) -> float:
    """<n(n-1)...(n-m+1)> of a distribution over 0..len(p)-1."""
    n = np.arange(len(p))
    ff = np.ones(len(p))
    for k in range(m):
        ff *= n - k
    return float(np.dot(ff, p))


def _top_down(mu: float, g2: float, g3: float, g4: float) -> np.ndarray:
    f2, f3, f4 = g2 * mu ** 2, g3 * mu ** 3, g4 * mu ** 4
    p4 = f4 / 24.0
    p3 = (f3 - 24.0 * p4) / 6.0
    p2 = (f2 - 6.0 * p3 - 12.0 * p4) / 2.0
    p1 = mu - 2.0 * p2 - 3.0 * p3 - 4.0 * p4
    return np.array([p1, p2, p3, p4])


def _bisect(f: Callable[[float], float], a: float, b: float, tol: float, max_iter: int = 200) -> float:
    fa = f(a)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
        if b - a < tol:
            break
    return 0.5 * (a + b)


def _clamp(p: np.ndarray, what: str) -> np.ndarray:
    if p.min() < -NEG_TOL:
        raise NumericalError(f"{what}: probability {p.min():.3g} below tolerance; inputs inconsistent")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def moments_to_detected(m: MomentSet) -> PhotonNumberDist:
    def excess(mu):
        return _top_down(mu, m.g2, m.g3, m.g4).sum() - m.B_prime

    # the excess is a quartic in mu and may cross zero more than once; every
    # crossing is bisected and the smallest one giving non-negative
    # probabilities wins (for clean data that is the first crossing)
    grid = np.linspace(0.0, 4.0, 4001)
    vals = np.array([excess(x) for x in grid])
    vals[0] = -m.B_prime
    idx = np.flatnonzero((vals[:-1] < 0) & (vals[1:] >= 0) | (vals[:-1] > 0) & (vals[1:] <= 0))
    if idx.size == 0:
        raise NumericalError("no mean photon number in (0, 4] reproduces B'")
    best = None
    for i in idx:
        lo, hi = grid[i], grid[i + 1]
        mu = hi if vals[i + 1] == 0 else _bisect(excess, lo, hi, 1e-12)
        p = np.concatenate([[1.0 - m.B_prime], _top_down(mu, m.g2, m.g3, m.g4)])
        if p.min() >= -NEG_TOL:
            best = p
            break
        if best is None or p.min() > best.min():
            best = p
    return PhotonNumberDist(tuple(_clamp(best, "moments_to_detected")), "detected")


def mean_photon_number(m: MomentSet) -> float:
    return moments_to_detected(m).mean()


def loss_matrix(eta: float) -> np.ndarray:
    """``L[m, n] = C(n, m) eta^m (1-eta)^(n-m)``; detected = L @ source."""
    n = np.arange(NMAX + 1)
    mm, nn = np.meshgrid(n, n, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        L = comb(nn, mm) * eta ** mm * (1.0 - eta) ** (nn - mm)
    L[mm > nn] = 0.0
    return np.nan_to_num(L)


def apply_loss(d: PhotonNumberDist, eta: float) -> PhotonNumberDist:
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must lie in [0, 1], got {eta}")
    p = loss_matrix(eta) @ d.array
    return PhotonNumberDist(tuple(p), "detected", eta_applied=eta)


def _invert_raw(pd: np.ndarray, eta: float) -> np.ndarray:
    """Back-substitution of the binomial map for n >= 1; p0 from normalisation."""
    p = np.zeros(NMAX + 1)
    for k in range(NMAX, 0, -1):
        acc = pd[k]
        for n in range(k + 1, NMAX + 1):
            acc -= comb(n, k) * eta ** k * (1.0 - eta) ** (n - k) * p[n]
        p[k] = acc / eta ** k
    p[0] = 1.0 - p[1:].sum()
    return p


def invert_loss(d: PhotonNumberDist, eta: float) -> PhotonNumberDist:
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must lie in (0, 1], got {eta}")
    p = _invert_raw(d.array, eta)
    if p.min() < -NEG_TOL:
        raise NumericalError(f"invert_loss: p = {p.min():.3g} < 0; eta={eta} too small for the data")
    if p.min() < 0:
        p = _clamp(p, "invert_loss")
    return PhotonNumberDist(tuple(p), "source", eta_applied=eta)


def estimate_eta(d_pi: PhotonNumberDist, tol: float = 1e-9) -> float:
    """Transmission for which the source emits at least one photon every pi pulse.

    The inferred vacuum ``p0(eta)`` is a polynomial in ``1 - 1/eta`` and can
    change sign again at very low transmission when the high-order terms are
    noisy, so the largest root is taken: scan down from 1, then bisect.
    """
    pd = d_pi.array
    if pd[1:].sum() <= 0:
        raise NumericalError("no detections: transmission undefined")

    def excess(eta):
        return _invert_raw(pd, eta)[1:].sum() - 1.0

    if excess(1.0) >= 0:
        return 1.0
    grid = np.geomspace(1.0, 1e-6, 2001)
    for hi, lo in zip(grid[:-1], grid[1:]):
        if excess(lo) >= 0:
            return _bisect(excess, lo, hi, tol)
    raise NumericalError("no transmission in (0, 1] gives p0 = 0")


def purities(d: PhotonNumberDist) -> tuple[float, ...]:
    nz = d.array[1:]
    total = nz.sum()
    if total <= 0:
        raise DataError("all-vacuum distribution has no purities")
    return tuple(float(x) for x in nz / total)


def bunching_g2(p0: float, p1: float, p2: float) -> float:
    """g2 of a state truncated at two photons: 2 p2 / (p1 + 2 p2)^2."""
    if abs(p0 + p1 + p2 - 1.0) > SUM_TOL:
        raise ValidationError("p0 + p1 + p2 must equal 1")
    if p1 == 0 and p2 == 0:
        raise ValidationError("g2 undefined without photons")
    return 2.0 * p2 / (p1 + 2.0 * p2) ** 2


def can_bunch(p0: float) -> bool:
    """Whether some split of 1 - p0 into p1, p2 gives g2 > 1 (needs p0 > 1/2)."""
    # max over p2 of 2 p2 / (1 - p0 + p2)^2 is at p2 = 1 - p0: 1 / (2 (1 - p0))
    return p0 > 0.5


def jacobian_sigma(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, sx: np.ndarray,
                   rel_step: float = 1e-4) -> np.ndarray:
    """First-order error propagation through ``fn`` with central differences."""
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(fn(x))
    var = np.zeros_like(y0, dtype=float)
    for i in range(x.size):
        if sx[i] == 0:
            continue
        h = rel_step * max(abs(x[i]), sx[i], 1e-12)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        # one-sided at a boundary where the pipeline refuses the input
        try:
            yp = np.asarray(fn(xp))
        except (NumericalError, ValidationError):
            yp, xp[i] = y0, x[i]
        try:
            ym = np.asarray(fn(xm))
        except (NumericalError, ValidationError):
            ym, xm[i] = y0, x[i]
        if xp[i] == xm[i]:
            continue
        var += ((yp - ym) / (xp[i] - xm[i]) * sx[i]) ** 2
    return np.sqrt(var)


@dataclass(frozen=True)
class PhotonNumberReport:
    moments: MomentSet
    mu: float
    eta: float | None
    detected: PhotonNumberDist
    source: PhotonNumberDist | None
    purities: tuple[float, ...] | None

    def to_dict(self) -> dict:
        m = self.moments
        out = {
            "inputs": {"g2": m.g2, "g3": m.g3, "g4": m.g4, "B_prime": m.B_prime,
                       "sigma_g2": m.sigma_g2, "sigma_g3": m.sigma_g3,
                       "sigma_g4": m.sigma_g4, "sigma_B": m.sigma_B},
            "mu": self.mu,
            "eta": self.eta,
            "detected": {"p": list(self.detected.p), "sigma": _opt(self.detected.sigma)},
        }
        if self.source is not None:
            out["source"] = {"p": list(self.source.p), "sigma": _opt(self.source.sigma)}
            out["purities"] = list(self.purities) if self.purities else None
        return out


def _opt(x):
    return None if x is None else list(x)


def extract(m: MomentSet, eta: float | None = None) -> PhotonNumberReport:
    """Full inversion with propagated 1-sigma errors on every probability."""
    detected = moments_to_detected(m)

    def det_fn(v):
        return moments_to_detected(MomentSet(*v)).array

    det_sigma = jacobian_sigma(det_fn, m.values, m.sigmas)
    detected = PhotonNumberDist(detected.p, "detected", sigma=tuple(det_sigma))
    source = pur = None
    if eta is not None:
        source = invert_loss(detected, eta)

        def src_fn(v):
            return invert_loss(moments_to_detected(MomentSet(*v)), eta).array

        src_sigma = jacobian_sigma(src_fn, m.values, m.sigmas)
        source = PhotonNumberDist(source.p, "source", eta_applied=eta, sigma=tuple(src_sigma))
        pur = purities(source) if source.array[1:].sum() > 0 else None
    return PhotonNumberReport(m, detected.mean(), eta, detected, source, pur)


def clicks_per_period(stream: TimeTagStream) -> np.ndarray:
    """Detector tags per clock period, each tag assigned to the latest clock edge before it.

    Without clock tags, periods are ``time // clock_period``.
    """
    det = stream.times[stream.detector_mask()]
    clock = stream.channel_times(CLOCK)
    if clock.size:
        idx = np.searchsorted(clock, det, side="right") - 1
        idx = idx[idx >= 0]
        n = clock.size
    else:
        idx = det // stream.clock_period
        n = stream.n_periods()
    if n == 0:
        raise DataError("stream spans zero clock periods")
    return np.bincount(idx, minlength=n)[:n]


def brightness(stream: TimeTagStream) -> tuple[float, float]:
    """B' = fraction of periods with at least one click, and its binomial sigma."""
    clicks = clicks_per_period(stream)
    b = float(np.count_nonzero(clicks)) / clicks.size
    return b, binomial_sigma(b, clicks.size)


def detected_from_counts(clicks_per_period: np.ndarray) -> PhotonNumberDist:
    """Direct p'_n from per-period click counts (n > 4 folded into p'_4)."""
    c = np.bincount(np.minimum(clicks_per_period, NMAX), minlength=NMAX + 1)[: NMAX + 1]
    return PhotonNumberDist(tuple(c / c.sum()), "detected", truncated=bool(np.any(clicks_per_period > NMAX)))


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else 0.0
