"""Time-tag records, streams, the PTAG binary format and stream utilities.

Times are integer picoseconds everywhere. A stream keeps two parallel arrays
(``times`` int64, ``channels`` uint16) sorted by time, ties by channel. Channel 0
is the laser clock; detectors are 1..4, other values are carried through.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numba
import numpy as np

from . import rng
from .errors import DataError, ValidationError

CLOCK = 0
DEFAULT_CLOCK_PERIOD = 12_500  # 80 MHz
DEFAULT_T_STOP = 12_400

MAGIC = b"PTAG"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHQQ8x")
RECORD = np.dtype([("time", "<u8"), ("channel", "<u2"), ("reserved", "V6")])
assert HEADER.size == 32 and RECORD.itemsize == 16


class TimeTag(NamedTuple):
    time: int
    channel: int


@dataclass(frozen=True)
class GateWindow:
    t_start: int = 0
    t_stop: int = DEFAULT_T_STOP

    def validate(self, clock_period: int) -> None:
        if not (0 <= self.t_start < self.t_stop <= clock_period):
            raise ValidationError(
                f"invalid gate [{self.t_start}, {self.t_stop}) for clock period {clock_period}"
            )


def _first_unsorted(times: np.ndarray, channels: np.ndarray) -> int:
    """Index of the first record out of (time, channel) order, or -1."""
    if times.size < 2:
        return -1
    dt = np.diff(times)
    bad = (dt < 0) | ((dt == 0) & (np.diff(channels.astype(np.int32)) < 0))
    idx = np.flatnonzero(bad)
    return int(idx[0]) + 1 if idx.size else -1


class TimeTagStream:
    """Immutable sorted stream of detection records plus clock metadata."""

    __slots__ = ("times", "channels", "clock_period", "n_channels")

    def __init__(self, times, channels, clock_period: int = DEFAULT_CLOCK_PERIOD,
                 n_channels: int | None = None):
        times = np.array(times, dtype=np.int64).reshape(-1)
        channels = np.array(channels, dtype=np.uint16).reshape(-1)
        if times.shape != channels.shape:
            raise DataError("times and channels differ in length")
        if clock_period <= 0:
            raise ValidationError("clock_period must be positive")
        if times.size and times[0] < 0:
            raise DataError("negative time at record 0")
        if channels.size and channels.max() > 255:
            raise DataError(f"channel {int(channels.max())} outside [0, 255]")
        k = _first_unsorted(times, channels)
        if k >= 0:
            raise DataError(f"non-monotone at record {k}")
        times.flags.writeable = False
        channels.flags.writeable = False
        if n_channels is None:
            n_channels = len(np.unique(channels[channels != CLOCK]))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "clock_period", int(clock_period))
        object.__setattr__(self, "n_channels", int(n_channels))

    def __setattr__(self, name, value):
        raise AttributeError("TimeTagStream is immutable")

    @classmethod
    def from_unsorted(cls, times, channels, clock_period=DEFAULT_CLOCK_PERIOD, n_channels=None):
        times = np.asarray(times, dtype=np.int64)
        channels = np.asarray(channels, dtype=np.uint16)
        order = np.lexsort((channels, times))
        return cls(times[order], channels[order], clock_period, n_channels)

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[TimeTag]:
        for t, c in zip(self.times.tolist(), self.channels.tolist()):
            yield TimeTag(t, c)

    @property
    def tags(self) -> list[TimeTag]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (self.clock_period == other.clock_period
                and self.n_channels == other.n_channels
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.channels, other.channels))

    def __repr__(self) -> str:
        return (f"TimeTagStream({len(self)} tags, clock_period={self.clock_period}, "
                f"n_channels={self.n_channels})")

    def channel_times(self, channel: int) -> np.ndarray:
        return self.times[self.channels == channel]

    def detector_mask(self) -> np.ndarray:
        return self.channels != CLOCK

    def channels_present(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.channels))

    def n_periods(self) -> int:
        """Acquisition length in clock periods: the clock-tag count, else the span."""
        n_clock = int(np.count_nonzero(self.channels == CLOCK))
        if n_clock:
            return n_clock
        if not len(self):
            return 0
        return int(self.times[-1] // self.clock_period) + 1

    def acquisition_time_s(self) -> float:
        return self.n_periods() * self.clock_period * 1e-12

    def subset(self, mask: np.ndarray) -> "TimeTagStream":
        return TimeTagStream(self.times[mask], self.channels[mask], self.clock_period, self.n_channels)


def read_stream(path) -> TimeTagStream:
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise DataError(f"{path}: malformed header (file shorter than {HEADER.size} bytes)")
        magic, version, n_channels, clock_period, count = HEADER.unpack(head)
        if magic != MAGIC:
            raise DataError(f"{path}: malformed header (bad magic {magic!r})")
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported format version {version}")
        if clock_period == 0:
            raise DataError(f"{path}: malformed header (clock period 0)")
        body = fh.read()
    n_full = len(body) // RECORD.itemsize
    if n_full < count or len(body) % RECORD.itemsize:
        raise DataError(f"{path}: truncated record {min(n_full, count)}")
    if n_full > count:
        raise DataError(f"{path}: {n_full - count} records beyond declared count")
    rec = np.frombuffer(body, dtype=RECORD, count=count)
    times = rec["time"].astype(np.int64)
    channels = rec["channel"].astype(np.uint16)
    if count and rec["time"].max() > np.iinfo(np.int64).max:
        raise DataError(f"{path}: time overflow")
    return TimeTagStream(times, channels, int(clock_period), int(n_channels))


def write_stream(stream: TimeTagStream, path) -> None:
    rec = np.zeros(len(stream), dtype=RECORD)
    rec["time"] = stream.times
    rec["channel"] = stream.channels
    with Path(path).open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, stream.n_channels, stream.clock_period, len(stream)))
        fh.write(rec.tobytes())


def write_csv(stream: TimeTagStream, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ps", "channel"])
        w.writerows(zip(stream.times.tolist(), stream.channels.tolist()))


def apply_gate(stream: TimeTagStream, gate: GateWindow, offset: int = 0) -> TimeTagStream:
    """Keep detector tags whose clock phase lies in ``[t_start, t_stop)``.

    ``offset`` shifts the clock edge: phase = (time - offset) mod clock_period.
    Clock tags are always kept.
    """
    gate.validate(stream.clock_period)
    phase = (stream.times - offset) % stream.clock_period
    keep = (stream.channels == CLOCK) | ((phase >= gate.t_start) & (phase < gate.t_stop))
    return stream.subset(keep)


@numba.njit(cache=True)
def _thin_mask(times, channels, seed, eta):
    key = rng.stream_key(seed, rng.THIN)
    keep = np.empty(times.shape[0], dtype=np.bool_)
    for i in range(times.shape[0]):
        if channels[i] == 0:
            keep[i] = True
        else:
            # keyed on tag identity so the decision does not depend on neighbours
            keep[i] = rng.uniform(key, times[i], channels[i]) < eta
    return keep


def thin(stream: TimeTagStream, eta: float, seed: int) -> TimeTagStream:
    """Binomial loss: each detector tag survives independently with probability ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must lie in [0, 1], got {eta}")
    keep = _thin_mask(stream.times, stream.channels, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), eta)
    return stream.subset(keep)


def merge_streams(*streams: TimeTagStream) -> TimeTagStream:
    """Merge streams sharing one clock period into one sorted stream."""
    if not streams:
        raise ValidationError("nothing to merge")
    periods = {s.clock_period for s in streams}
    if len(periods) != 1:
        raise ValidationError(f"clock periods differ: {sorted(periods)}")
    times = np.concatenate([s.times for s in streams])
    channels = np.concatenate([s.channels for s in streams])
    return TimeTagStream.from_unsorted(times, channels, periods.pop())


def shift_channel(stream: TimeTagStream, channel: int, delay: int) -> TimeTagStream:
    """Delay one channel by ``delay`` ps (cable/alignment compensation) and re-sort."""
    times = stream.times.copy()
    sel = stream.channels == channel
    times[sel] += delay
    if times.size and times.min() < 0:
        raise DataError("shift produced negative times")
    return TimeTagStream.from_unsorted(times, stream.channels, stream.clock_period, stream.n_channels)


def check_sorted(times, channels) -> None:
    k = _first_unsorted(np.asarray(times, dtype=np.int64), np.asarray(channels))
    if k >= 0:
        raise DataError(f"non-monotone at record {k}")
