"""Greedy piecewise linear regression over sorted keys.

A model is a list of line segments. Each segment predicts the position of a
key as ``slope * (key - start_key) + intercept``; the subtraction is done on
exact integers and only the offset is converted to a double, which keeps
precision over 128-bit key ranges.

Training is the one-pass greedy cone algorithm: the first two points of a
segment fix a pivot (their midpoint) and an initial slope cone, and every
following point narrows the cone to the slopes that keep it within
``delta`` positions. When the cone becomes empty the segment is closed with
the cone's middle slope and a new segment starts at the rejected point.
A verification pass then re-evaluates every point with the inference
arithmetic and splits any segment that rounding pushed over the bound.
"""

from __future__ import annotations

import math
import struct
import zlib
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import CorruptionError, InvalidInputError

DEFAULT_DELTA = 8

MODEL_MAGIC = b"BPLR"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sIIQI16s")  # magic, version, delta, num_points, segment count, max key
_SEGMENT = struct.Struct("<16sdd")
SEGMENT_BYTES = _SEGMENT.size
HEADER_BYTES = _HEADER.size + 4  # plus trailing crc32


@dataclass(frozen=True)
class Segment:
    start_key: int
    slope: float
    intercept: float

    def evaluate(self, key: int) -> float:
        return self.slope * float(key - self.start_key) + self.intercept


@dataclass(frozen=True)
class PredictedRange:
    pos: int
    lo: int
    hi: int


class OutOfRange(LookupError):
    """The key lies outside the model's trained key range."""


@dataclass
class PLRModel:
    segments: list[Segment]
    delta: int
    num_points: int
    min_key: int
    max_key: int
    # Parallel arrays for the hot lookup path.
    _starts: list[int] = field(init=False, repr=False, compare=False)
    _slopes: list[float] = field(init=False, repr=False, compare=False)
    _intercepts: list[float] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._starts = [s.start_key for s in self.segments]
        self._slopes = [s.slope for s in self.segments]
        self._intercepts = [s.intercept for s in self.segments]

    @property
    def key_range(self) -> tuple[int, int]:
        return self.min_key, self.max_key

    def position(self, key: int) -> int:
        """Rounded, clamped position prediction; no range check."""
        starts = self._starts
        i = bisect_right(starts, key) - 1
        if i < 0:
            i = 0
        # int() truncates where floor would not only below zero, which clamps to 0 either way.
        pos = int(self._slopes[i] * float(key - starts[i]) + self._intercepts[i] + 0.5)
        if pos < 0:
            return 0
        if pos >= self.num_points:
            return self.num_points - 1
        return pos

    def predict(self, key: int) -> PredictedRange:
        if key < self.min_key or key > self.max_key:
            raise OutOfRange(key)
        pos = self.position(key)
        d = self.delta
        return PredictedRange(pos, max(0, pos - d), min(self.num_points - 1, pos + d))

    def size_bytes(self) -> int:
        return HEADER_BYTES + SEGMENT_BYTES * len(self.segments)


def predict(model: PLRModel, key: int) -> PredictedRange:
    return model.predict(key)


def _raw_position(slope: float, start: int, intercept: float, key: int) -> int:
    return math.floor(slope * float(key - start) + intercept + 0.5)


def _fit_run(keys: Sequence[int], base: int, begin: int, end: int, delta: int) -> tuple[Segment, int]:
    """Grow one segment from ``keys[begin]``; return it and the first index it does not cover.

    Positions are ``base + index``; arithmetic is relative to the segment's
    first point so the floats stay small.
    """
    x0 = keys[begin]
    if begin + 1 == end:
        return Segment(x0, 0.0, float(base + begin)), end
    x1 = float(keys[begin + 1] - x0)
    # Pivot is the midpoint of the first two points; cone spans the lines
    # through (0, +delta)/(x1, 1 - delta) and (0, -delta)/(x1, 1 + delta).
    px = x1 / 2.0
    py = 0.5
    lo = (1.0 - 2.0 * delta) / x1
    hi = (1.0 + 2.0 * delta) / x1
    j = begin + 2
    while j < end:
        dx = float(keys[j] - x0) - px
        y = j - begin - py
        cand_lo = (y - delta) / dx
        cand_hi = (y + delta) / dx
        new_lo = lo if lo > cand_lo else cand_lo
        new_hi = hi if hi < cand_hi else cand_hi
        if new_lo > new_hi:
            break
        lo, hi = new_lo, new_hi
        j += 1
    slope = (lo + hi) / 2.0
    intercept = base + begin + py - slope * px
    return Segment(x0, slope, intercept), j


def _fit_range(keys: Sequence[int], base: int, begin: int, end: int, delta: int, out: list[Segment]) -> None:
    i = begin
    while i < end:
        seg, stop = _fit_run(keys, base, i, end, delta)
        # Verify under inference arithmetic; split at the first violation.
        bad = -1
        slope, start, intercept = seg.slope, seg.start_key, seg.intercept
        for j in range(i, stop):
            if abs(_raw_position(slope, start, intercept, keys[j]) - (base + j)) > delta:
                bad = j
                break
        if bad == -1:
            out.append(seg)
            i = stop
        elif bad == i:
            # Start point itself is off: a single-point segment is always exact.
            out.append(Segment(keys[i], 0.0, float(base + i)))
            i += 1
        else:
            out.append(seg)
            i = bad


def fit_keys(keys: Sequence[int], delta: int = DEFAULT_DELTA, base: int = 0) -> PLRModel:
    """Train over ``keys`` whose positions are ``base, base + 1, ...``.

    Keys must be strictly increasing; this is not re-checked here.
    """
    if delta < 1:
        raise InvalidInputError("delta must be >= 1")
    if not keys:
        raise InvalidInputError("cannot train on zero points")
    segments: list[Segment] = []
    _fit_range(keys, base, 0, len(keys), delta, segments)
    return PLRModel(segments, delta, base + len(keys), keys[0], keys[-1])


def train_greedy_plr(points: Iterable[tuple[int, int]], delta: int = DEFAULT_DELTA) -> PLRModel:
    """Train a model over sorted ``(key, position)`` pairs with positions ``0..n-1``."""
    keys = []
    prev = None
    for expected, (key, pos) in enumerate(points):
        if pos != expected:
            raise InvalidInputError(f"positions must be consecutive from 0; got {pos} at index {expected}")
        if prev is not None and key <= prev:
            raise InvalidInputError(f"keys must be strictly ascending; {key} follows {prev}")
        if key < 0:
            raise InvalidInputError("keys are unsigned")
        keys.append(key)
        prev = key
    return fit_keys(keys, delta)


def check_keys_sorted(keys: Sequence[int]) -> None:
    for a, b in zip(keys, keys[1:]):
        if b <= a:
            raise InvalidInputError(f"keys must be strictly ascending; {b} follows {a}")


def max_error(model: PLRModel, keys: Sequence[int], base: int = 0) -> int:
    """Largest |predicted - true| over ``keys`` using the lookup arithmetic."""
    worst = 0
    for i, k in enumerate(keys):
        err = abs(model.position(k) - (base + i))
        if err > worst:
            worst = err
    return worst


def serialize_model(model: PLRModel) -> bytes:
    if not model.segments:
        raise InvalidInputError("refusing to serialize a model with no segments")
    parts = [
        _HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            model.delta,
            model.num_points,
            len(model.segments),
            model.max_key.to_bytes(16, "big"),
        )
    ]
    for seg in model.segments:
        parts.append(_SEGMENT.pack(seg.start_key.to_bytes(16, "big"), seg.slope, seg.intercept))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_model(data: bytes) -> PLRModel:
    if len(data) < HEADER_BYTES:
        raise CorruptionError("model blob truncated")
    magic, version, delta, num_points, count, max_key = _HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise CorruptionError("bad model magic")
    if version != MODEL_VERSION:
        raise CorruptionError(f"unknown model version {version}")
    expected = HEADER_BYTES + count * SEGMENT_BYTES
    if len(data) != expected:
        raise CorruptionError(f"model blob is {len(data)} bytes, header implies {expected}")
    body = data[:-4]
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(body) != crc:
        raise CorruptionError("model checksum mismatch")
    if count == 0:
        raise CorruptionError("model has no segments")
    segments = []
    off = _HEADER.size
    for _ in range(count):
        start, slope, intercept = _SEGMENT.unpack_from(data, off)
        segments.append(Segment(int.from_bytes(start, "big"), slope, intercept))
        off += SEGMENT_BYTES
    return PLRModel(segments, delta, num_points, segments[0].start_key, int.from_bytes(max_key, "big"))
