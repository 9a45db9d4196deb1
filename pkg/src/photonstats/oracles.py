"""Brute-force reference computations used by the self-test and the test-suite.

Nothing here shares code with the fast paths: pair delays come from full
difference matrices, with no sorted-window search.
"""

from __future__ import annotations

import numpy as np

from .timetag import TimeTagStream

BLOCK = 1 << 22


def _pairs(x: np.ndarray, y: np.ndarray, bin_width: int, K: int):
    """All (i, j, bin) with y[j] - x[i] binned into [-K, K], from full difference matrices."""
    h = bin_width // 2
    step = max(1, BLOCK // max(y.size, 1))
    out_i, out_j, out_b = [], [], []
    for s in range(0, x.size, step):
        b = (y[None, :] - x[s:s + step, None] + h) // bin_width
        i, j = np.nonzero(np.abs(b) <= K)
        out_i.append(i + s)
        out_j.append(j)
        out_b.append(b[i, j])
    cat = np.concatenate
    return cat(out_i), cat(out_j), cat(out_b)


def naive_histogram(stream: TimeTagStream, m: int, bin_width: int, max_delay: int, channels) -> np.ndarray:
    """Dense (2K+1,)*(m-1) histogram of every m-tuple, one tag per channel.

    Consecutive-channel pairs come from exhaustive difference matrices and
    are chained into tuples by joining on the shared tag index.
    """
    K = max_delay // bin_width
    ts = [stream.times[stream.channels == c] for c in channels]
    _, last, b = _pairs(ts[0], ts[1], bin_width, K)
    bins = [b]
    for a in range(1, m - 1):
        pi, pj, pb = _pairs(ts[a], ts[a + 1], bin_width, K)
        order = np.argsort(pi, kind="stable")
        pi, pj, pb = pi[order], pj[order], pb[order]
        n_per = np.bincount(pi, minlength=ts[a].size)
        first = np.concatenate([[0], np.cumsum(n_per)[:-1]])
        reps = n_per[last]
        rows = np.repeat(np.arange(last.size), reps)
        offs = np.arange(rows.size) - np.repeat(np.cumsum(reps) - reps, reps)
        sel = first[last][rows] + offs
        bins = [bb[rows] for bb in bins] + [pb[sel]]
        last = pj[sel]
    out = np.zeros((2 * K + 1,) * (m - 1), dtype=np.int64)
    np.add.at(out, tuple(bb + K for bb in bins), 1)
    return out


def factorial_moments(counts: np.ndarray, orders=(1, 2, 3, 4)) -> dict[int, float]:
    """Sample factorial moments <n(n-1)...(n-k+1)> of integer counts."""
    c = np.asarray(counts, dtype=float)
    out = {}
    for k in orders:
        ff = np.ones_like(c)
        for j in range(k):
            ff *= c - j
        out[k] = float(ff.mean())
    return out


def random_stream(rng: np.random.Generator, n_tags: int, n_channels: int, span: int,
                  clock_period: int = 12_500, pulsed: bool = True) -> TimeTagStream:
    """Random multi-channel stream; pulsed streams cluster tags near clock edges."""
    ch = rng.integers(1, n_channels + 1, n_tags)
    if pulsed:
        pulse = rng.integers(0, max(span // clock_period, 1), n_tags)
        t = pulse * clock_period + 150 + rng.exponential(204.0, n_tags).astype(np.int64) \
            + rng.integers(-60, 61, n_tags)
    else:
        t = rng.integers(0, span, n_tags)
    return TimeTagStream.from_unsorted(np.maximum(t, 0), ch, clock_period)
