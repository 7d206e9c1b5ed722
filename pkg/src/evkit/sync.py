"""Tick-log filtering and annotation/event time alignment.

Tick logs are CSV rows produced once per simulation tick per actor:
``tick_t_us,actor_id,class_id,x,y,w,h,speed_mps,distance_m``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Annotation, EventStream
from .errors import FormatError

TICK_LOG_HEADER = "tick_t_us,actor_id,class_id,x,y,w,h,speed_mps,distance_m"

DEFAULT_RATE_HZ = 30.0
DEFAULT_MIN_SPEED = 0.1


@dataclass(frozen=True)
class TickRecord:
    tick_t: int
    actor_id: int
    class_id: int
    x: float
    y: float
    w: float
    h: float
    speed: float
    distance: float

    def __post_init__(self):
        if self.speed < 0:
            raise FormatError(f"speed must be non-negative, got {self.speed}")
        if self.distance < 0:
            raise FormatError(f"distance must be non-negative, got {self.distance}")
        if self.w <= 0 or self.h <= 0:
            raise FormatError(f"box size must be positive, got w={self.w} h={self.h}")


@dataclass(frozen=True)
class FrameIndex:
    start_t: int
    delta_t: int

    def __post_init__(self):
        if self.delta_t <= 0:
            raise FormatError(f"delta_t must be positive, got {self.delta_t}")


def filter_tick_records(records: Sequence[TickRecord], min_speed: float = DEFAULT_MIN_SPEED,
                        radius: float = float("inf")) -> list[TickRecord]:
    """Keep actors moving strictly faster than min_speed within radius meters."""
    if min_speed < 0:
        raise FormatError(f"min_speed must be non-negative, got {min_speed}")
    if radius <= 0:
        raise FormatError(f"radius must be positive, got {radius}")
    return [r for r in records if r.speed > min_speed and r.distance <= radius]


def output_period_us(rate_hz: float) -> int:
    if rate_hz <= 0:
        raise FormatError(f"rate must be positive, got {rate_hz}")
    return int(1e6 // rate_hz)


def resample_annotations(records: Sequence[TickRecord], rate_hz: float = DEFAULT_RATE_HZ) -> list[Annotation]:
    """Re-emit boxes on the fixed appearance grid (multiples of the output period).

    Each output tick takes the latest record at or before it, provided that
    record is less than one source-tick spacing old; older boxes are stale.
    """
    period = output_period_us(rate_hz)
    if not records:
        return []
    ticks = [r.tick_t for r in records]
    for a, b in zip(ticks, ticks[1:]):
        if b < a:
            raise FormatError("tick records not sorted by timestamp")

    distinct = sorted(set(ticks))
    if len(distinct) > 1:
        tolerance = min(b - a for a, b in zip(distinct, distinct[1:]))
    else:
        tolerance = period

    by_actor: dict[int, list[TickRecord]] = {}
    for r in records:
        by_actor.setdefault(r.actor_id, []).append(r)

    out: list[Annotation] = []
    for actor_id in sorted(by_actor):
        recs = by_actor[actor_id]
        actor_ticks = [r.tick_t for r in recs]
        first, last = actor_ticks[0], actor_ticks[-1]
        n = -(-first // period)  # first grid point >= first record
        while True:
            t_out = n * period
            if t_out >= last + tolerance:
                break
            i = bisect.bisect_right(actor_ticks, t_out) - 1
            if i >= 0 and t_out - actor_ticks[i] < tolerance:
                r = recs[i]
                out.append(Annotation(t=t_out, x=r.x, y=r.y, w=r.w, h=r.h,
                                      class_id=r.class_id, class_confidence=1.0))
            n += 1
    out.sort(key=lambda a: a.t)
    return out


@dataclass(frozen=True)
class GroupedEvents:
    groups: list  # (start_t, EventStream) pairs, one per frame interval
    unassigned: EventStream


def group_events_by_frame(stream: EventStream, frames: Sequence[FrameIndex]) -> GroupedEvents:
    """Bucket events into frame intervals [start_t, start_t + delta_t), keyed by start."""
    for a, b in zip(frames, frames[1:]):
        if b.start_t < a.start_t:
            raise FormatError("frame index not sorted by start_t")
        if b.start_t < a.start_t + a.delta_t:
            raise FormatError(f"overlapping frame intervals at start_t={b.start_t}")

    starts = np.array([f.start_t for f in frames], dtype=np.uint64)
    ends = np.array([f.start_t + f.delta_t for f in frames], dtype=np.uint64)

    groups = []
    assigned = np.zeros(len(stream), dtype=bool)
    for f, start, end in zip(frames, starts.tolist(), ends.tolist()):
        lo, hi = np.searchsorted(stream.t, [start, end], side="left")
        groups.append((f.start_t, EventStream(
            stream.geometry, stream.t[lo:hi], stream.x[lo:hi],
            stream.y[lo:hi], stream.p[lo:hi], validate=False)))
        assigned[lo:hi] = True
    keep = ~assigned
    unassigned = EventStream(stream.geometry, stream.t[keep], stream.x[keep],
                             stream.y[keep], stream.p[keep], validate=False)
    return GroupedEvents(groups=groups, unassigned=unassigned)


# --------------------------------------------------------------------------
# Tick-log CSV

def encode_tick_log(records: Sequence[TickRecord]) -> bytes:
    lines = [TICK_LOG_HEADER + "\n"]
    for r in records:
        lines.append(f"{r.tick_t},{r.actor_id},{r.class_id},{_num(r.x)},{_num(r.y)},"
                     f"{_num(r.w)},{_num(r.h)},{_num(r.speed)},{_num(r.distance)}\n")
    return "".join(lines).encode()


def decode_tick_log(data: bytes) -> list[TickRecord]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"tick log is not valid UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != TICK_LOG_HEADER:
        got = lines[0].strip() if lines else ""
        raise FormatError(f"expected header {TICK_LOG_HEADER!r}, got {got!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 9:
            raise FormatError(f"row {lineno}: expected 9 fields, got {len(fields)}")
        try:
            records.append(TickRecord(
                tick_t=int(fields[0]), actor_id=int(fields[1]), class_id=int(fields[2]),
                x=float(fields[3]), y=float(fields[4]), w=float(fields[5]),
                h=float(fields[6]), speed=float(fields[7]), distance=float(fields[8])))
        except ValueError:
            raise FormatError(f"row {lineno}: unparsable number in {line!r}") from None
    return records


def _num(v: float) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)
