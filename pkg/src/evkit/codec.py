"""Byte-exact event and annotation formats.

Three formats:

* EVB — packed binary events. 24-byte little-endian header
  (magic ``EVB1``, version u16, width u16, height u16, count u64, 6 reserved
  zero bytes) followed by 16-byte records: t u64, x u16, y u16, p i8 (+1/-1),
  3 reserved zero bytes.
* Event CSV — header ``t_us,x,y,p``, one row per event.
* Annotation CSV — the seven-field 1MPX row
  ``t_us,x,y,w,h,class_id,class_confidence`` (confidence at 6 decimals);
  detections use ``score`` in place of ``class_confidence``.

Encoders and decoders work through file objects in fixed-size chunks, so
memory stays bounded by the chunk size rather than the file size.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .core import Annotation, Detection, EventStream, SensorGeometry
from .errors import CodecError

EVB_MAGIC = b"EVB1"
EVB_VERSION = 1
EVB_HEADER = struct.Struct("<4sHHHQ6s")  # 24 bytes
EVB_RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"),
                             ("p", "i1"), ("pad", "V3")])  # 16 bytes

CHUNK_EVENTS = 1 << 16

EVENT_CSV_HEADER = "t_us,x,y,p"
ANNOTATION_CSV_HEADER = "t_us,x,y,w,h,class_id,class_confidence"
DETECTION_CSV_HEADER = "t_us,x,y,w,h,class_id,score"


class BadMagicError(CodecError):
    pass


class TruncatedError(CodecError):
    pass


class CountMismatchError(CodecError):
    pass


class InvalidPolarityError(CodecError):
    pass


class OrderingError(CodecError):
    pass


class OutOfBoundsError(CodecError):
    pass


class RowFormatError(CodecError):
    pass


@dataclass(frozen=True)
class DecodeResult:
    stream: EventStream
    warnings: int = 0


# --------------------------------------------------------------------------
# EVB

def write_events_evb(stream: EventStream, fp: BinaryIO,
                     chunk_events: int = CHUNK_EVENTS) -> None:
    geom = stream.geometry
    if geom.width > 0xFFFF or geom.height > 0xFFFF:
        raise CodecError(f"geometry {geom.width}x{geom.height} exceeds 16-bit range")
    n = len(stream)
    fp.write(EVB_HEADER.pack(EVB_MAGIC, EVB_VERSION, geom.width, geom.height,
                             n, b"\x00" * 6))
    for lo in range(0, n, chunk_events):
        hi = min(lo + chunk_events, n)
        rec = np.zeros(hi - lo, dtype=EVB_RECORD_DTYPE)
        rec["t"] = stream.t[lo:hi]
        rec["x"] = stream.x[lo:hi]
        rec["y"] = stream.y[lo:hi]
        rec["p"] = stream.p[lo:hi]
        fp.write(rec.tobytes())


def read_events_evb(fp: BinaryIO, strict: bool = True,
                    chunk_events: int = CHUNK_EVENTS) -> DecodeResult:
    header = fp.read(EVB_HEADER.size)
    if len(header) < EVB_HEADER.size:
        raise TruncatedError(f"EVB header truncated: {len(header)} bytes")
    magic, version, width, height, count, _reserved = EVB_HEADER.unpack(header)
    if magic != EVB_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != EVB_VERSION:
        raise CodecError(f"unsupported EVB version {version}")
    if width < 1 or height < 1:
        raise CodecError(f"invalid geometry {width}x{height} in header")
    geometry = SensorGeometry(width=width, height=height)

    parts = []
    record = EVB_RECORD_DTYPE.itemsize
    read_count = 0
    while True:
        buf = fp.read(record * chunk_events)
        if not buf:
            break
        if len(buf) % record != 0:
            raise TruncatedError(f"truncated EVB record: trailing {len(buf) % record} bytes")
        rec = np.frombuffer(buf, dtype=EVB_RECORD_DTYPE)
        read_count += len(rec)
        if read_count > count:
            raise CountMismatchError(f"more records than header count {count}")
        parts.append(rec)
    if read_count != count:
        raise CountMismatchError(f"header count {count}, found {read_count} records")

    if not parts:
        return DecodeResult(EventStream.empty(geometry), 0)
    rec = np.concatenate(parts)
    return _assemble(geometry, rec["t"].copy(), rec["x"].astype(np.int64),
                     rec["y"].astype(np.int64), rec["p"].copy(), strict)


def _assemble(geometry: SensorGeometry, t, x, y, p, strict: bool) -> DecodeResult:
    bad_p = (p != 1) & (p != -1)
    if np.any(bad_p):
        raise InvalidPolarityError(
            f"invalid polarity value {int(p[bad_p][0])} at record {int(np.argmax(bad_p))}")
    warnings = 0
    oob = (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
    if np.any(oob):
        if strict:
            raise OutOfBoundsError(
                f"coordinates out of bounds at record {int(np.argmax(oob))}")
        warnings += int(oob.sum())
        keep = ~oob
        t, x, y, p = t[keep], x[keep], y[keep], p[keep]
    stream = EventStream(geometry, t, x, y, p, validate=False)
    if not stream.is_canonical():
        if strict:
            raise OrderingError("events are not in canonical (t, y, x, p) order")
        warnings += 1
        stream = stream.sorted()
    return DecodeResult(stream, warnings)


# --------------------------------------------------------------------------
# Event CSV

def write_events_csv(stream: EventStream, fp: BinaryIO,
                     chunk_events: int = CHUNK_EVENTS) -> None:
    fp.write((EVENT_CSV_HEADER + "\n").encode())
    n = len(stream)
    for lo in range(0, n, chunk_events):
        hi = min(lo + chunk_events, n)
        lines = [f"{t},{x},{y},{p}\n" for t, x, y, p in
                 zip(stream.t[lo:hi].tolist(), stream.x[lo:hi].tolist(),
                     stream.y[lo:hi].tolist(), stream.p[lo:hi].tolist())]
        fp.write("".join(lines).encode())


def read_events_csv(fp: BinaryIO, strict: bool = True,
                    geometry: SensorGeometry | None = None,
                    chunk_events: int = CHUNK_EVENTS) -> DecodeResult:
    text = io.TextIOWrapper(fp, encoding="utf-8", newline="")
    try:
        header = text.readline().strip()
    except UnicodeDecodeError as exc:
        raise RowFormatError(f"not valid UTF-8: {exc}") from None
    if header != EVENT_CSV_HEADER:
        raise RowFormatError(f"expected header {EVENT_CSV_HEADER!r}, got {header!r}")
    ts, xs, ys, ps = [], [], [], []
    parts_t, parts_x, parts_y, parts_p = [], [], [], []

    def flush():
        if ts:
            parts_t.append(np.array(ts, dtype=np.uint64))
            parts_x.append(np.array(xs, dtype=np.int64))
            parts_y.append(np.array(ys, dtype=np.int64))
            parts_p.append(np.array(ps, dtype=np.int64))
            ts.clear(); xs.clear(); ys.clear(); ps.clear()

    lineno = 1
    while True:
        try:
            line = text.readline()
        except UnicodeDecodeError as exc:
            raise RowFormatError(f"not valid UTF-8: {exc}") from None
        if not line:
            break
        lineno += 1
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise RowFormatError(f"row {lineno}: expected 4 fields, got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise RowFormatError(f"row {lineno}: unparsable integer in {line!r}") from None
        if t < 0:
            raise RowFormatError(f"row {lineno}: negative timestamp {t}")
        ts.append(t); xs.append(x); ys.append(y); ps.append(p)
        if len(ts) >= chunk_events:
            flush()
    flush()

    if not parts_t:
        return DecodeResult(EventStream.empty(geometry), 0)
    t = np.concatenate(parts_t)
    x = np.concatenate(parts_x)
    y = np.concatenate(parts_y)
    p = np.concatenate(parts_p)
    if geometry is None:
        width = max(int(x.max()) + 1, 1) if len(x) else 1
        height = max(int(y.max()) + 1, 1) if len(y) else 1
        geometry = SensorGeometry(width=width, height=height)
    return _assemble(geometry, t, x, y, p, strict)


# --------------------------------------------------------------------------
# Byte-sequence convenience wrappers

def encode_events(stream: EventStream, format: str = "evb") -> bytes:
    buf = io.BytesIO()
    if format == "evb":
        write_events_evb(stream, buf)
    elif format == "csv":
        write_events_csv(stream, buf)
    else:
        raise CodecError(f"unknown event format {format!r}")
    return buf.getvalue()


def decode_events(data: bytes, format: str = "evb", strict: bool = True,
                  geometry: SensorGeometry | None = None) -> DecodeResult:
    buf = io.BytesIO(data)
    if format == "evb":
        return read_events_evb(buf, strict=strict)
    if format == "csv":
        return read_events_csv(buf, strict=strict, geometry=geometry)
    raise CodecError(f"unknown event format {format!r}")


def sniff_format(path: str) -> str:
    """Guess evb vs csv from the leading bytes of a file."""
    with open(path, "rb") as fp:
        head = fp.read(4)
    return "evb" if head == EVB_MAGIC else "csv"


# --------------------------------------------------------------------------
# Annotation / detection CSV (seven fields)

def encode_annotations(rows: Sequence[Annotation]) -> bytes:
    lines = [ANNOTATION_CSV_HEADER + "\n"]
    prev_t = None
    for row in rows:
        if prev_t is not None and row.t < prev_t:
            raise CodecError(f"annotations not sorted by timestamp at t={row.t}")
        prev_t = row.t
        if row.w <= 0 or row.h <= 0:
            raise CodecError(f"non-positive box size w={row.w} h={row.h}")
        lines.append(f"{row.t},{_num(row.x)},{_num(row.y)},{_num(row.w)},"
                     f"{_num(row.h)},{row.class_id},{row.class_confidence:.6f}\n")
    return "".join(lines).encode()


def decode_annotations(data: bytes) -> list[Annotation]:
    rows = []
    for lineno, fields in _seven_field_rows(data, ANNOTATION_CSV_HEADER):
        t, x, y, w, h, class_id, conf = fields
        if not 0.0 <= conf <= 1.0:
            raise RowFormatError(f"row {lineno}: class_confidence {conf} outside [0, 1]")
        try:
            rows.append(Annotation(t=t, x=x, y=y, w=w, h=h, class_id=class_id,
                                   class_confidence=conf))
        except Exception as exc:
            raise RowFormatError(f"row {lineno}: {exc}") from None
    return rows


def encode_detections(rows: Sequence[Detection]) -> bytes:
    lines = [DETECTION_CSV_HEADER + "\n"]
    for row in rows:
        lines.append(f"{row.t},{_num(row.x)},{_num(row.y)},{_num(row.w)},"
                     f"{_num(row.h)},{row.class_id},{_num(row.score)}\n")
    return "".join(lines).encode()


def decode_detections(data: bytes) -> list[Detection]:
    rows = []
    for lineno, fields in _seven_field_rows(data, DETECTION_CSV_HEADER):
        t, x, y, w, h, class_id, score = fields
        if not 0.0 <= score <= 1.0:
            raise RowFormatError(f"row {lineno}: score {score} outside [0, 1]")
        try:
            rows.append(Detection(t=t, x=x, y=y, w=w, h=h, class_id=class_id,
                                  score=score))
        except Exception as exc:
            raise RowFormatError(f"row {lineno}: {exc}") from None
    return rows


def _num(v: float) -> str:
    """Shortest decimal that round-trips; integers print without a fraction."""
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def _seven_field_rows(data: bytes, expected_header: str):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise RowFormatError(f"not valid UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != expected_header:
        got = lines[0].strip() if lines else ""
        raise RowFormatError(f"expected header {expected_header!r}, got {got!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise RowFormatError(f"row {lineno}: expected 7 fields, got {len(fields)}")
        try:
            t = int(fields[0])
            x, y, w, h = (float(f) for f in fields[1:5])
            class_id = int(fields[5])
            last = float(fields[6])
        except ValueError:
            raise RowFormatError(f"row {lineno}: unparsable number in {line!r}") from None
        yield lineno, (t, x, y, w, h, class_id, last)
