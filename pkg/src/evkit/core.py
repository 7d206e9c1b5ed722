"""Core domain types: events, streams, frames, boxes.

Timestamps are integer microseconds everywhere. An :class:`EventStream` is
canonical when events are sorted by (t, y, x, p) ascending; canonical streams
compare byte-for-byte, which is what the determinism tests rely on.

The stream is backed by numpy arrays (t: u8, x/y: u2, p: i1) so that large
files decode and slice without per-event Python objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError

DEFAULT_WIDTH = 1280
DEFAULT_HEIGHT = 720

PEDESTRIAN = 0
VEHICLE = 1
DEFAULT_CLASSES = {PEDESTRIAN: "pedestrian", VEHICLE: "vehicle"}


@dataclass(frozen=True)
class SensorGeometry:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise FormatError(f"sensor geometry must be >= 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int

    def __post_init__(self):
        if self.p not in (1, -1):
            raise FormatError(f"polarity must be +1 or -1, got {self.p}")
        if self.t < 0:
            raise FormatError(f"timestamp must be non-negative, got {self.t}")
        if self.x < 0 or self.y < 0:
            raise FormatError(f"coordinates must be non-negative, got ({self.x}, {self.y})")


class EventStream:
    """Immutable, canonically ordered sequence of events plus sensor geometry."""

    __slots__ = ("geometry", "t", "x", "y", "p")

    def __init__(self, geometry: SensorGeometry, t, x, y, p, *, validate: bool = True):
        self.geometry = geometry
        self.t = np.ascontiguousarray(t, dtype=np.uint64)
        self.x = np.ascontiguousarray(x, dtype=np.uint16)
        self.y = np.ascontiguousarray(y, dtype=np.uint16)
        self.p = np.ascontiguousarray(p, dtype=np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise FormatError("event field arrays have mismatched lengths")
        for arr in (self.t, self.x, self.y, self.p):
            arr.setflags(write=False)
        if validate:
            self._validate()

    def _validate(self) -> None:
        if len(self) == 0:
            return
        if not np.all((self.p == 1) | (self.p == -1)):
            raise FormatError("polarity values must be +1 or -1")
        if np.any(self.x >= self.geometry.width) or np.any(self.y >= self.geometry.height):
            raise FormatError("event coordinates exceed sensor geometry "
                              f"{self.geometry.width}x{self.geometry.height}")
        if not self.is_canonical():
            raise FormatError("events are not in canonical (t, y, x, p) order")

    def is_canonical(self) -> bool:
        if len(self) < 2:
            return True
        # pairwise lexicographic (t, y, x, p) non-decreasing, all vectorized
        dt = np.diff(self.t.astype(np.int64))
        if np.any(dt < 0):
            return False
        dy = np.diff(self.y.astype(np.int32))
        dx = np.diff(self.x.astype(np.int32))
        dp = np.diff(self.p.astype(np.int16))
        ok = (dt > 0) | (dy > 0) | ((dy == 0) & ((dx > 0) | ((dx == 0) & (dp >= 0))))
        return bool(np.all(ok))

    @classmethod
    def empty(cls, geometry: SensorGeometry | None = None) -> "EventStream":
        geometry = geometry or SensorGeometry()
        return cls(geometry, [], [], [], [], validate=False)

    @classmethod
    def from_events(cls, events: Sequence[Event], geometry: SensorGeometry | None = None,
                    *, sort: bool = False) -> "EventStream":
        geometry = geometry or SensorGeometry()
        t = np.array([e.t for e in events], dtype=np.uint64)
        x = np.array([e.x for e in events], dtype=np.uint16)
        y = np.array([e.y for e in events], dtype=np.uint16)
        p = np.array([e.p for e in events], dtype=np.int8)
        s = cls(geometry, t, x, y, p, validate=not sort)
        return s.sorted() if sort else s

    def sorted(self) -> "EventStream":
        """Return the canonically sorted copy of this stream."""
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return EventStream(self.geometry, self.t[order], self.x[order],
                           self.y[order], self.p[order])

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(x=int(self.x[i]), y=int(self.y[i]), t=int(self.t[i]), p=int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.geometry == other.geometry
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.p, other.p))

    def __repr__(self) -> str:
        return (f"EventStream({len(self)} events, "
                f"{self.geometry.width}x{self.geometry.height})")


def slice_stream(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with t0 <= t < t1, order and geometry preserved."""
    if t0 > t1:
        raise FormatError(f"invalid slice range: t0={t0} > t1={t1}")
    lo, hi = np.searchsorted(stream.t, [max(t0, 0), max(t1, 0)], side="left")
    return EventStream(stream.geometry, stream.t[lo:hi], stream.x[lo:hi],
                       stream.y[lo:hi], stream.p[lo:hi], validate=False)


@dataclass(frozen=True)
class Frame:
    """One timestamped intensity image, grayscale (H, W) or RGB (H, W, 3) in [0, 255]."""

    t: int
    geometry: SensorGeometry
    intensity: np.ndarray

    def __post_init__(self):
        if self.t < 0:
            raise FormatError(f"frame timestamp must be non-negative, got {self.t}")
        shape = self.intensity.shape
        ok = shape[:2] == (self.geometry.height, self.geometry.width) and (
            len(shape) == 2 or (len(shape) == 3 and shape[2] == 3))
        if not ok:
            raise FormatError(f"frame shape {shape} does not match geometry "
                              f"{self.geometry.height}x{self.geometry.width}")


@dataclass(frozen=True)
class Annotation:
    """One 1MPX-style box row: timestamp, x, y, w, h, class_id, class_confidence."""

    t: int
    x: float
    y: float
    w: float
    h: float
    class_id: int
    class_confidence: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise FormatError(f"box size must be positive, got w={self.w} h={self.h}")
        if not 0.0 <= self.class_confidence <= 1.0:
            raise FormatError(f"class_confidence outside [0, 1]: {self.class_confidence}")


@dataclass(frozen=True)
class Detection:
    """A detector output box: same geometry as Annotation plus a score."""

    t: int
    x: float
    y: float
    w: float
    h: float
    class_id: int
    score: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise FormatError(f"box size must be positive, got w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise FormatError(f"score outside [0, 1]: {self.score}")
