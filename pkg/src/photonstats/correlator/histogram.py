"""Multi-start multi-stop coincidence histograms of order 2..4.

Axes follow consecutive channel differences: ``tau_i = t_{i+1} - t_i``. Bin
``k`` of width ``bw`` holds delays with ``floor((tau + bw // 2) / bw) == k``,
so bin 0 is centred on zero delay and ``k`` runs over ``-K..K`` with
``K = max_delay / bw``. A tuple (one tag per selected channel) is counted when
every delay falls in a bin; no tag is ever excluded from pairing with another.

Orders 2 and 3 are stored densely; order 4 is stored as sorted sparse
coordinates. Construction partitions the start channel into chunks that are
processed in parallel and merged by integer addition, so the counts do not
depend on the partitioning or the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DataError, ValidationError
from ..timetag import TimeTagStream

DENSE_CELL_LIMIT = 1 << 22


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    order: int
    bin_width: int
    max_delay: int
    clock_period: int
    channels: tuple[int, ...]
    total_tags_per_channel: tuple[int, ...]
    n_periods: int
    dense: np.ndarray | None = None       # shape (2K+1,) * (order-1)
    coords: np.ndarray | None = None      # (n, order-1) signed bin indices
    values: np.ndarray | None = None      # (n,) counts for coords

    @property
    def half_bins(self) -> int:
        return self.max_delay // self.bin_width

    @property
    def n_axes(self) -> int:
        return self.order - 1

    def axis(self) -> np.ndarray:
        """Bin centres (ps) shared by every delay axis."""
        K = self.half_bins
        return np.arange(-K, K + 1, dtype=np.int64) * self.bin_width

    def nonzero(self) -> tuple[np.ndarray, np.ndarray]:
        """(signed bin coordinates, counts) of every non-empty bin."""
        if self.dense is not None:
            idx = np.nonzero(self.dense)
            coords = np.stack(idx, axis=1).astype(np.int64) - self.half_bins
            return coords, self.dense[idx]
        return self.coords, self.values

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        K = self.half_bins
        out = np.zeros((2 * K + 1,) * self.n_axes, dtype=np.int64)
        if self.values.size:
            np.add.at(out, tuple((self.coords + K).T), self.values)
        return out

    def total(self) -> int:
        return int(self.nonzero()[1].sum())

    def same_geometry(self, other: "CorrelationHistogram") -> bool:
        return (self.order, self.bin_width, self.max_delay, self.clock_period, self.channels) == (
            other.order, other.bin_width, other.max_delay, other.clock_period, other.channels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorrelationHistogram):
            return NotImplemented
        if not self.same_geometry(other):
            return False
        a, b = self.nonzero(), other.nonzero()
        ka, kb = _sort_coo(*a), _sort_coo(*b)
        return np.array_equal(ka[0], kb[0]) and np.array_equal(ka[1], kb[1])

    def __add__(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        """Merge partial histograms built from disjoint parts of one acquisition."""
        if not self.same_geometry(other):
            raise ValidationError("cannot merge histograms with different geometry")
        tags = tuple(a + b for a, b in zip(self.total_tags_per_channel, other.total_tags_per_channel))
        base = dict(order=self.order, bin_width=self.bin_width, max_delay=self.max_delay,
                    clock_period=self.clock_period, channels=self.channels,
                    total_tags_per_channel=tags, n_periods=self.n_periods + other.n_periods)
        if self.dense is not None and other.dense is not None:
            return CorrelationHistogram(dense=self.dense + other.dense, **base)
        c = np.concatenate([self.nonzero()[0], other.nonzero()[0]])
        v = np.concatenate([self.nonzero()[1], other.nonzero()[1]])
        coords, values = _sum_duplicates(c, v)
        return CorrelationHistogram(coords=coords, values=values, **base)


def _sort_coo(coords, values):
    if values.size == 0:
        return coords.reshape(0, coords.shape[1] if coords.ndim == 2 else 0), values
    order = np.lexsort(coords.T[::-1])
    return coords[order], values[order]


def _sum_duplicates(coords, values):
    if values.size == 0:
        return coords, values
    uniq, inv = np.unique(coords, axis=0, return_inverse=True)
    sums = np.zeros(uniq.shape[0], dtype=np.int64)
    np.add.at(sums, inv.reshape(-1), values)
    keep = sums != 0
    return uniq[keep], sums[keep]


@numba.njit(cache=True)
def _lower(arr, x):
    return np.searchsorted(arr, x, side="left")


@numba.njit(cache=True)
def _range_bounds(t, bw, K):
    """Tag-time interval [lo, hi) of partners whose delay from ``t`` lands in a bin."""
    h = bw // 2
    return t - K * bw - h, t + K * bw - h + bw


@numba.njit(cache=True)
def _bin(tau, bw):
    return (tau + bw // 2) // bw


@numba.njit(cache=True)
def _chunk_edges(n, n_chunks):
    edges = np.empty(n_chunks + 1, dtype=np.int64)
    for c in range(n_chunks + 1):
        edges[c] = (n * c) // n_chunks
    return edges


@numba.njit(parallel=True, cache=True)
def _hist2(a, b, bw, K, n_chunks):
    D = 2 * K + 1
    part = np.zeros((n_chunks, D), dtype=np.int64)
    edges = _chunk_edges(a.shape[0], n_chunks)
    for c in numba.prange(n_chunks):
        i0 = edges[c]
        i1 = edges[c + 1]
        if i0 == i1:
            continue
        lo, _ = _range_bounds(a[i0], bw, K)
        j = _lower(b, lo)
        for i in range(i0, i1):
            t = a[i]
            lo, hi = _range_bounds(t, bw, K)
            while j < b.shape[0] and b[j] < lo:
                j += 1
            k = j
            while k < b.shape[0] and b[k] < hi:
                part[c, _bin(b[k] - t, bw) + K] += 1
                k += 1
    out = np.zeros(D, dtype=np.int64)
    for c in range(n_chunks):
        out += part[c]
    return out


@numba.njit(parallel=True, cache=True)
def _hist3(a, b, c3, bw, K, n_chunks):
    D = 2 * K + 1
    part = np.zeros((n_chunks, D, D), dtype=np.int64)
    edges = _chunk_edges(a.shape[0], n_chunks)
    for c in numba.prange(n_chunks):
        for i in range(edges[c], edges[c + 1]):
            t1 = a[i]
            lo, hi = _range_bounds(t1, bw, K)
            j = _lower(b, lo)
            while j < b.shape[0] and b[j] < hi:
                t2 = b[j]
                k1 = _bin(t2 - t1, bw) + K
                lo2, hi2 = _range_bounds(t2, bw, K)
                l = _lower(c3, lo2)
                while l < c3.shape[0] and c3[l] < hi2:
                    part[c, k1, _bin(c3[l] - t2, bw) + K] += 1
                    l += 1
                j += 1
    out = np.zeros((D, D), dtype=np.int64)
    for c in range(n_chunks):
        out += part[c]
    return out


@numba.njit(cache=True)
def _walk4(a, b, c3, d, bw, K, i0, i1, dense, sink, fill):
    """Enumerate 4-tuples for start tags ``a[i0:i1]``.

    Accumulates into ``dense`` when it is non-empty, otherwise writes linear
    indices into ``sink`` (when ``fill``) and returns the tuple count.
    """
    D = 2 * K + 1
    use_dense = dense.shape[0] > 0
    n = 0
    for i in range(i0, i1):
        t1 = a[i]
        lo, hi = _range_bounds(t1, bw, K)
        j = _lower(b, lo)
        while j < b.shape[0] and b[j] < hi:
            t2 = b[j]
            k1 = _bin(t2 - t1, bw) + K
            lo2, hi2 = _range_bounds(t2, bw, K)
            l = _lower(c3, lo2)
            while l < c3.shape[0] and c3[l] < hi2:
                t3 = c3[l]
                k2 = _bin(t3 - t2, bw) + K
                lo3, hi3 = _range_bounds(t3, bw, K)
                q = _lower(d, lo3)
                while q < d.shape[0] and d[q] < hi3:
                    k3 = _bin(d[q] - t3, bw) + K
                    if use_dense:
                        dense[k1, k2, k3] += 1
                    elif fill:
                        sink[n] = (k1 * D + k2) * D + k3
                    n += 1
                    q += 1
                l += 1
            j += 1
    return n


@numba.njit(parallel=True, cache=True)
def _hist4_dense(a, b, c3, d, bw, K, n_chunks):
    D = 2 * K + 1
    part = np.zeros((n_chunks, D, D, D), dtype=np.int64)
    edges = _chunk_edges(a.shape[0], n_chunks)
    empty = np.empty(0, dtype=np.int64)
    for c in numba.prange(n_chunks):
        _walk4(a, b, c3, d, bw, K, edges[c], edges[c + 1], part[c], empty, False)
    out = np.zeros((D, D, D), dtype=np.int64)
    for c in range(n_chunks):
        out += part[c]
    return out


@numba.njit(parallel=True, cache=True)
def _hist4_sparse(a, b, c3, d, bw, K, n_chunks):
    edges = _chunk_edges(a.shape[0], n_chunks)
    no_dense = np.zeros((0, 0, 0), dtype=np.int64)
    empty = np.empty(0, dtype=np.int64)
    counts = np.zeros(n_chunks, dtype=np.int64)
    for c in numba.prange(n_chunks):
        counts[c] = _walk4(a, b, c3, d, bw, K, edges[c], edges[c + 1], no_dense, empty, False)
    offs = np.zeros(n_chunks + 1, dtype=np.int64)
    for c in range(n_chunks):
        offs[c + 1] = offs[c] + counts[c]
    sink = np.empty(offs[n_chunks], dtype=np.int64)
    for c in numba.prange(n_chunks):
        _walk4(a, b, c3, d, bw, K, edges[c], edges[c + 1], no_dense,
               sink[offs[c]:offs[c + 1]], True)
    return sink


def _chunks(n_tags: int, n_chunks: int | None) -> int:
    if n_chunks is None:
        n_chunks = numba.get_num_threads()
    return max(1, min(int(n_chunks), max(n_tags, 1)))


def build_histogram(stream: TimeTagStream, m: int, bin_width: int, max_delay: int,
                    channels, n_chunks: int | None = None) -> CorrelationHistogram:
    channels = tuple(int(c) for c in channels)
    if m not in (2, 3, 4):
        raise ValidationError(f"order must be 2, 3 or 4, got {m}")
    if len(channels) != m:
        raise ValidationError(f"order {m} needs {m} channels, got {len(channels)}")
    if len(set(channels)) != m:
        raise ValidationError(f"duplicate channels {channels}")
    if bin_width <= 0:
        raise ValidationError("bin_width must be positive")
    if max_delay <= 0 or max_delay % bin_width:
        raise ValidationError("max_delay must be a positive multiple of bin_width")
    present = stream.channels_present()
    missing = [c for c in channels if c not in present]
    if missing:
        raise DataError(f"channel(s) {missing} not in stream; channels present: {present}")

    K = max_delay // bin_width
    D = 2 * K + 1
    ts = [np.ascontiguousarray(stream.channel_times(c)) for c in channels]
    nc = _chunks(ts[0].size, n_chunks)
    base = dict(order=m, bin_width=int(bin_width), max_delay=int(max_delay),
                clock_period=stream.clock_period, channels=channels,
                total_tags_per_channel=tuple(int(t.size) for t in ts), n_periods=stream.n_periods())
    if m == 2:
        return CorrelationHistogram(dense=_hist2(ts[0], ts[1], bin_width, K, nc), **base)
    if m == 3:
        return CorrelationHistogram(dense=_hist3(ts[0], ts[1], ts[2], bin_width, K, nc), **base)
    if D ** 3 <= DENSE_CELL_LIMIT // max(nc, 1):
        dense = _hist4_dense(ts[0], ts[1], ts[2], ts[3], bin_width, K, nc)
        idx = np.nonzero(dense)
        coords = np.stack(idx, axis=1).astype(np.int64) - K
        return CorrelationHistogram(coords=coords, values=dense[idx], **base)
    lin = _hist4_sparse(ts[0], ts[1], ts[2], ts[3], bin_width, K, nc)
    uniq, counts = np.unique(lin, return_counts=True)
    coords = np.stack([uniq // (D * D), (uniq // D) % D, uniq % D], axis=1) - K
    return CorrelationHistogram(coords=coords.astype(np.int64), values=counts.astype(np.int64), **base)
