"""Polarity-colored event-frame rendering.

Positive events render blue, negative red (the usual DVS viewer convention);
pixels with no events keep the background color.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .core import EventStream, Frame, slice_stream
from .errors import FormatError

BLUE = (0, 0, 255)
RED = (255, 0, 0)
BLACK = (0, 0, 0)
GRAY = (128, 128, 128)

MAJORITY = "majority"
LAST_EVENT_WINS = "last-event-wins"


@dataclass(frozen=True)
class Palette:
    positive: tuple[int, int, int] = BLUE
    negative: tuple[int, int, int] = RED
    background: tuple[int, int, int] = BLACK
    mixing: str = MAJORITY

    def __post_init__(self):
        if len({self.positive, self.negative, self.background}) != 3:
            raise FormatError("palette colors must be distinct")
        if self.mixing not in (MAJORITY, LAST_EVENT_WINS):
            raise FormatError(f"unknown mixing rule {self.mixing!r}")


def polarity_counts(stream: EventStream, t0: int, t1: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel positive and negative event counts over [t0, t1)."""
    window = slice_stream(stream, t0, t1)
    h, w = stream.geometry.height, stream.geometry.width
    flat = window.y.astype(np.int64) * w + window.x.astype(np.int64)
    pos = np.bincount(flat[window.p > 0], minlength=h * w).reshape(h, w)
    neg = np.bincount(flat[window.p < 0], minlength=h * w).reshape(h, w)
    return pos, neg


def render_window(stream: EventStream, t0: int, t1: int,
                  palette: Palette | None = None) -> Frame:
    """Accumulate events in [t0, t1) into an RGB frame colored by polarity."""
    if t0 >= t1:
        raise FormatError(f"invalid render window: [{t0}, {t1})")
    palette = palette or Palette()
    h, w = stream.geometry.height, stream.geometry.width
    pos, neg = polarity_counts(stream, t0, t1)

    if palette.mixing == MAJORITY:
        use_pos = pos > neg
        use_neg = neg > pos
        ties = (pos == neg) & (pos > 0)
        if np.any(ties):
            # tie breaks to the temporally last event at that pixel
            last_p = _last_polarity(stream, t0, t1, h, w)
            use_pos |= ties & (last_p > 0)
            use_neg |= ties & (last_p < 0)
    else:
        last_p = _last_polarity(stream, t0, t1, h, w)
        use_pos = last_p > 0
        use_neg = last_p < 0

    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:, :] = palette.background
    img[use_pos] = palette.positive
    img[use_neg] = palette.negative
    return Frame(t=t0, geometry=stream.geometry, intensity=img)


def _last_polarity(stream: EventStream, t0: int, t1: int, h: int, w: int) -> np.ndarray:
    """Polarity of the temporally last event per pixel (0 where none)."""
    window = slice_stream(stream, t0, t1)
    flat = window.y.astype(np.int64) * w + window.x.astype(np.int64)
    last_idx = np.full(h * w, -1, dtype=np.int64)
    np.maximum.at(last_idx, flat, np.arange(len(flat), dtype=np.int64))
    last_p = np.zeros(h * w, dtype=np.int8)
    hit = last_idx >= 0
    last_p[hit] = window.p[last_idx[hit]]
    return last_p.reshape(h, w)


def write_ppm(frame: Frame, fp: BinaryIO) -> None:
    """Binary PPM (P6), bit-exact for golden-file comparison."""
    img = np.asarray(frame.intensity)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError("PPM output requires an RGB frame")
    h, w = img.shape[:2]
    fp.write(f"P6\n{w} {h}\n255\n".encode())
    fp.write(img.astype(np.uint8).tobytes())
