"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, pulse, slot)``, so pulses can
be simulated in any order or in parallel and still give identical output. The
mixer is the splitmix64 finaliser applied to a Weyl-spaced combination of the
key and the counters.
"""

import numba
import numpy as np

# stream identifiers, one per kind of draw
JUMP = 1
FINAL = 2
DECAY = 3
LOSS = 4
ROUTE = 5
JITTER = 6
REF_COUNT = 7
REF_TIME = 8
BACKGROUND = 9
THIN = 10

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_C3 = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def stream_key(seed, stream):
    """Derive the key for one draw stream of a run."""
    return mix64(mix64(np.uint64(seed)) ^ (np.uint64(stream) * _GOLDEN))


@numba.njit(cache=True)
def bits(key, counter, slot):
    z = mix64(key + np.uint64(counter) * _C3)
    return mix64(z + np.uint64(slot) * _GOLDEN)


@numba.njit(cache=True)
def uniform(key, counter, slot):
    """Uniform double on the open interval (0, 1)."""
    return (np.float64(bits(key, counter, slot) >> _S11) + 0.5) * _INV53


@numba.njit(cache=True)
def normal(key, counter, slot):
    """Standard normal via Box-Muller on slots ``2*slot`` and ``2*slot+1``."""
    u1 = uniform(key, counter, 2 * slot)
    u2 = uniform(key, counter, 2 * slot + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@numba.njit(cache=True)
def exponential(key, counter, slot):
    return -np.log(uniform(key, counter, slot))


@numba.njit(cache=True)
def poisson(key, counter, slot, lam):
    """Poisson draw by sequential inversion; fine for the small means used here."""
    u = uniform(key, counter, slot)
    p = np.exp(-lam)
    cdf = p
    k = 0
    while u > cdf and k < 10000:
        k += 1
        p *= lam / k
        cdf += p
    return k


@numba.njit(cache=True)
def geometric(key, counter, slot, mean):
    """Number of failures before success, ``P(k) = q**k (1-q)`` with ``q = mean/(1+mean)``."""
    if mean <= 0.0:
        return 0
    u = uniform(key, counter, slot)
    q = mean / (1.0 + mean)
    return int(np.floor(np.log(u) / np.log(q)))


@numba.njit(cache=True)
def uniform_array(seed, stream, counters, slot):
    key = stream_key(seed, stream)
    out = np.empty(counters.shape[0])
    for i in range(counters.shape[0]):
        out[i] = uniform(key, counters[i], slot)
    return out


def uniforms(seed, stream, counters, slot=0):
    """Vector of uniforms for the given counters (convenience for tests and utilities)."""
    return uniform_array(np.uint64(seed), stream, np.asarray(counters, dtype=np.int64), slot)
