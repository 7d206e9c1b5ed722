"""Frame-sequence to event-stream conversion.

Per-pixel integrator model: a reference log intensity advances by one
contrast threshold per emitted event and keeps the sub-threshold residual.
Event timestamps are linearly interpolated inside each frame pair and
rounded to integer microseconds.

Threshold jitter uses a counter-based generator keyed by
(seed, pixel index, frame-pair index, candidate ordinal), so the output is
bit-identical no matter how the pixel grid is partitioned across tiles.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Event, EventStream, Frame, SensorGeometry
from .errors import FormatError

MIN_THRESHOLD = 0.01

BT601_WEIGHTS = (0.299, 0.587, 0.114)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_NORMAL = NormalDist()


@dataclass(frozen=True)
class EmulatorParams:
    c_pos: float = 0.3
    c_neg: float = 0.3
    sigma_pos: float = 0.0
    sigma_neg: float = 0.0
    refractory: int = 0          # microseconds
    use_log: bool = True
    log_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.c_pos <= 0 or self.c_neg <= 0:
            raise FormatError("contrast thresholds must be positive")
        if self.sigma_pos < 0 or self.sigma_neg < 0:
            raise FormatError("threshold jitter must be non-negative")
        if self.refractory < 0:
            raise FormatError("refractory period must be non-negative")
        if self.log_eps <= 0:
            raise FormatError("log_eps must be positive")

    @property
    def noise_free(self) -> bool:
        return self.sigma_pos == 0.0 and self.sigma_neg == 0.0


@dataclass(frozen=True)
class PixelState:
    l_ref: float
    t_last: Optional[int] = None


def _mix64(h: int) -> int:
    h &= _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return h ^ (h >> 31)


def counter_normal(seed: int, pixel_index: int, frame_index: int, ordinal: int) -> float:
    """Standard-normal draw addressed purely by its counter coordinates."""
    h = seed & _MASK64
    for word in (pixel_index, frame_index, ordinal):
        h = _mix64(h + ((word + 1) * _GOLDEN & _MASK64))
    u = ((h >> 11) + 0.5) * 2.0 ** -53  # uniform in (0, 1)
    return _NORMAL.inv_cdf(u)


def log_map(intensity, params: EmulatorParams):
    """Map raw intensity in [0, 255] to the brightness scale events integrate over."""
    scaled = np.asarray(intensity, dtype=np.float64) / 255.0
    out = np.log(scaled + params.log_eps) if params.use_log else scaled
    return float(out) if np.isscalar(intensity) else out


def luma(intensity: np.ndarray) -> np.ndarray:
    """Reduce an RGB image to single-channel brightness (BT.601 weights)."""
    if intensity.ndim == 2:
        return np.asarray(intensity, dtype=np.float64)
    r, g, b = BT601_WEIGHTS
    img = np.asarray(intensity, dtype=np.float64)
    return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]


def step_pixel(state: PixelState, l_new: float, t_prev: int, t_new: int,
               params: EmulatorParams, rng: Callable[[int], float] | None = None,
               x: int = 0, y: int = 0) -> tuple[list[Event], PixelState]:
    """Advance one pixel across a frame pair, emitting threshold-crossing events.

    ``rng(ordinal)`` supplies the standard-normal draw for candidate ``ordinal``;
    it is only consulted when the matching sigma is nonzero.
    """
    if t_prev >= t_new:
        raise FormatError(f"non-monotonic frame timestamps: {t_prev} >= {t_new}")
    if not math.isfinite(state.l_ref):
        raise FormatError("pixel reference level is not finite")

    delta = l_new - state.l_ref
    if delta == 0.0:
        return [], state

    pol = 1 if delta > 0 else -1
    mag = abs(delta)
    base_c = params.c_pos if pol > 0 else params.c_neg
    sigma = params.sigma_pos if pol > 0 else params.sigma_neg
    dt = t_new - t_prev

    events: list[Event] = []
    l_ref0 = state.l_ref
    l_ref = state.l_ref
    t_last = state.t_last
    acc = 0.0
    k = 0
    while True:
        if sigma == 0.0:
            # constant threshold: multiplicative form keeps exact-multiple
            # brightness steps exact (no drift from repeated addition)
            ck = max(base_c, MIN_THRESHOLD)
            new_acc = ck * (k + 1)
        else:
            ck = max(base_c + sigma * rng(k), MIN_THRESHOLD)
            new_acc = acc + ck
        if new_acc > mag:
            break
        tk = t_prev + int(round(new_acc / mag * dt))
        if (params.refractory > 0 and t_last is not None
                and tk - t_last < params.refractory):
            # dropped by the refractory window: no reference advance, and no
            # further candidates for this frame pair
            break
        events.append(Event(x=x, y=y, t=tk, p=pol))
        if sigma == 0.0:
            l_ref = l_ref0 + pol * new_acc
        else:
            l_ref = l_ref + pol * ck
        t_last = tk
        acc = new_acc
        k += 1

    if not events:
        return [], state
    return events, PixelState(l_ref=l_ref, t_last=t_last)


def _emit_tile_fast(l_ref: np.ndarray, l_new: np.ndarray, t_prev: int, t_new: int,
                    params: EmulatorParams, x0: int):
    """Vectorized noise-free, no-refractory path over one column band.

    Mirrors step_pixel exactly: event count n is the largest k with
    k * c <= |delta|, timestamps round(k*c/|delta| * dt).
    """
    delta = l_new - l_ref
    mag = np.abs(delta)
    c_pos = max(params.c_pos, MIN_THRESHOLD)
    c_neg = max(params.c_neg, MIN_THRESHOLD)
    c = np.where(delta > 0, c_pos, c_neg)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = np.floor_divide(mag, c).astype(np.int64)
    # fix float division off-by-one against the k*c <= mag rule
    n += ((n + 1) * c <= mag)
    n -= (n > 0) & (n * c > mag)
    n[mag == 0.0] = 0

    rows, cols = np.nonzero(n)
    if len(rows) == 0:
        return None, l_ref
    counts = n[rows, cols]
    total = int(counts.sum())
    rep = np.repeat(np.arange(len(rows)), counts)
    kk = np.arange(total, dtype=np.float64) - np.repeat(
        np.cumsum(counts) - counts, counts) + 1.0
    c_rep = c[rows, cols][rep]
    mag_rep = mag[rows, cols][rep]
    dt = float(t_new - t_prev)
    t_ev = np.uint64(t_prev) + np.rint(kk * c_rep / mag_rep * dt).astype(np.uint64)
    pol = np.where(delta[rows, cols] > 0, 1, -1).astype(np.int8)

    sign = pol.astype(np.float64)
    new_ref = l_ref.copy()
    new_ref[rows, cols] = l_ref[rows, cols] + sign * counts * c[rows, cols]

    ev = (t_ev,
          (cols[rep] + x0).astype(np.uint16),
          rows[rep].astype(np.uint16),
          pol[rep])
    return ev, new_ref


def _emulate_tile(frames_l: list[np.ndarray], times: list[int],
                  params: EmulatorParams, x0: int, x1: int, width: int):
    """Run the integrator over columns [x0, x1) for all frame pairs."""
    l_ref = frames_l[0][:, x0:x1].copy()
    chunks = []
    fast = params.noise_free and params.refractory == 0
    height = l_ref.shape[0]
    t_last = np.full((height, x1 - x0), -1, dtype=np.int64) if not fast else None

    for i in range(1, len(frames_l)):
        l_new = frames_l[i][:, x0:x1]
        t_prev, t_new = times[i - 1], times[i]
        if fast:
            ev, l_ref = _emit_tile_fast(l_ref, l_new, t_prev, t_new, params, x0)
            if ev is not None:
                chunks.append(ev)
            continue

        rows, cols = np.nonzero(l_new != l_ref)
        pair_index = i - 1
        ts, xs, ys, ps = [], [], [], []
        for r, cc in zip(rows.tolist(), cols.tolist()):
            gx = x0 + cc
            pixel_index = r * width + gx
            last = int(t_last[r, cc])
            state = PixelState(l_ref=float(l_ref[r, cc]),
                               t_last=None if last < 0 else last)
            rng = lambda k, _pi=pixel_index: counter_normal(
                params.seed, _pi, pair_index, k)
            events, state = step_pixel(state, float(l_new[r, cc]), t_prev, t_new,
                                       params, rng, x=gx, y=r)
            if events:
                ts.extend(e.t for e in events)
                xs.extend(e.x for e in events)
                ys.extend(e.y for e in events)
                ps.extend(e.p for e in events)
                l_ref[r, cc] = state.l_ref
                t_last[r, cc] = state.t_last
        if ts:
            chunks.append((np.array(ts, dtype=np.uint64),
                           np.array(xs, dtype=np.uint16),
                           np.array(ys, dtype=np.uint16),
                           np.array(ps, dtype=np.int8)))
    return chunks


def emulate(frames: Sequence[Frame], params: EmulatorParams,
            tiles: int = 1, threads: int = 1) -> EventStream:
    """Convert a timestamped frame sequence into a canonical event stream.

    ``tiles`` splits the pixel grid into column bands; the result is
    bit-identical for any tile count. ``threads`` caps worker threads used to
    process tiles concurrently.
    """
    if len(frames) == 0:
        raise FormatError("emulate requires at least one frame")
    geometry = frames[0].geometry
    for f in frames:
        if f.geometry != geometry:
            raise FormatError("all frames must share the same geometry")
    times = [f.t for f in frames]
    for a, b in zip(times, times[1:]):
        if a >= b:
            raise FormatError(f"non-monotonic frame timestamps: {a} >= {b}")
    if tiles < 1:
        raise FormatError("tiles must be >= 1")

    frames_l = [log_map(luma(f.intensity), params) for f in frames]
    width = geometry.width
    tiles = min(tiles, width)
    bounds = [(width * i // tiles, width * (i + 1) // tiles) for i in range(tiles)]

    if threads > 1 and tiles > 1:
        with ThreadPoolExecutor(max_workers=min(threads, tiles)) as pool:
            per_tile = list(pool.map(
                lambda b: _emulate_tile(frames_l, times, params, b[0], b[1], width),
                bounds))
    else:
        per_tile = [_emulate_tile(frames_l, times, params, x0, x1, width)
                    for x0, x1 in bounds]

    chunks = [c for tile_chunks in per_tile for c in tile_chunks]
    if not chunks:
        return EventStream.empty(geometry)
    t = np.concatenate([c[0] for c in chunks])
    x = np.concatenate([c[1] for c in chunks])
    y = np.concatenate([c[2] for c in chunks])
    p = np.concatenate([c[3] for c in chunks])
    order = np.lexsort((p, x, y, t))
    return EventStream(geometry, t[order], x[order], y[order], p[order])
