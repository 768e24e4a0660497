"""Gateway: frame intake, dedupe, and streaming per-channel normalization.

The gateway sits between the device fleet and the twin. It parses wire
lines back into frames, rejects malformed or wrong-version input, drops
duplicates left by at-least-once delivery, and divides every channel by
its trailing standard deviation so downstream stages see unit-spread
signals. Only the scale is removed; the mean is kept, because absolute
vital levels carry clinical meaning.

Sigma is estimated per patient and per channel over a trailing window
(default 256 samples) with the n-1 denominator, and is floored at a small
epsilon: a flat or single-sample channel is scaled by 1/epsilon and the
frame is flagged low-variance instead of dividing by zero.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import FrameParseError, FrameValidationError, ValidationError, VersionError
from .telemetry import CHANNELS, SensorFrame

WIRE_VERSION = 1

# Floor for the scale estimate; also the marker of a low-variance channel.
SIGMA_EPS = 1e-6

DEFAULT_STATS_WINDOW = 256

# How often running sums are rebuilt from the buffer to cancel float drift.
_RESYNC_EVERY = 4096


def decode_frame(line: str) -> SensorFrame:
    """Parse one wire line; raises on malformed, wrong-version or invalid frames.

    Duplicate detection is not done here; it is a property of the stream,
    not of a single line.
    """
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FrameParseError(f"expected a JSON object, got {type(doc).__name__}")
    version = doc.get("v")
    if version != WIRE_VERSION:
        raise VersionError(f"unsupported frame version {version!r}, expected {WIRE_VERSION}")
    for key in ("device_id", "seq", "t_ms", "channels"):
        if key not in doc:
            raise FrameValidationError(f"frame missing required field {key!r}")
    if not isinstance(doc["device_id"], str) or not doc["device_id"]:
        raise FrameValidationError(f"device_id must be a non-empty string, got {doc['device_id']!r}")
    for key in ("seq", "t_ms"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool) or doc[key] < 0:
            raise FrameValidationError(f"{key} must be a non-negative integer, got {doc[key]!r}")
    channels = doc["channels"]
    if not isinstance(channels, dict):
        raise FrameValidationError("channels must be an object")
    missing = [c for c in CHANNELS if c not in channels]
    if missing:
        raise FrameValidationError(f"channels missing {missing}")
    clean: dict[str, float] = {}
    for name in CHANNELS:
        value = channels[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FrameValidationError(f"channel {name} must be numeric, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise FrameValidationError(f"channel {name} must be finite, got {value}")
        clean[name] = value
    _check_channel_ranges(clean)
    context = doc.get("context")
    if context is not None and not isinstance(context, dict):
        raise FrameValidationError("context must be an object when present")
    return SensorFrame(
        device_id=doc["device_id"],
        seq=doc["seq"],
        t_ms=doc["t_ms"],
        channels=clean,
        context=context,
    )


def _check_channel_ranges(ch: dict[str, float]) -> None:
    if not 0.0 < ch["hr_bpm"] <= 300.0:
        raise FrameValidationError(f"hr_bpm={ch['hr_bpm']} outside (0, 300]")
    if not ch["sbp_mmhg"] > ch["dbp_mmhg"] > 0.0:
        raise FrameValidationError(
            f"pressures must satisfy sbp > dbp > 0, got sbp={ch['sbp_mmhg']}, dbp={ch['dbp_mmhg']}"
        )
    if not 0.0 < ch["spo2_pct"] <= 100.0:
        raise FrameValidationError(f"spo2_pct={ch['spo2_pct']} outside (0, 100]")
    if not 0.0 <= ch["activity_level"] <= 1.0:
        raise FrameValidationError(f"activity_level={ch['activity_level']} outside [0, 1]")


class Deduper:
    """Tracks (device_id, seq) pairs so replayed duplicates are dropped."""

    def __init__(self):
        self._seen: set[tuple[str, int]] = set()

    def accept(self, frame: SensorFrame) -> bool:
        key = (frame.device_id, frame.seq)
        if key in self._seen:
            return False
        self._seen.add(key)
        return True

    def __len__(self) -> int:
        return len(self._seen)


class TrailingStats:
    """Mean and sample standard deviation over a bounded trailing window.

    Updates are O(1) via running sums of values shifted by a per-stream
    pivot (the first value seen). Shifting matters: vitals sit far from
    zero, and accumulating raw squares cancels catastrophically when the
    mean dwarfs the spread. The sums are additionally rebuilt from the
    buffer every few thousand pushes, re-pivoting on the current mean.
    sigma() uses the n-1 denominator and is 0 below two samples.
    """

    def __init__(self, window: int):
        if window < 2:
            raise ValueError(f"window must be >= 2, got {window}")
        self.window = window
        self._buf: deque[float] = deque(maxlen=window)
        self._shift: float | None = None
        self._sum = 0.0
        self._sumsq = 0.0
        self._pushes = 0

    def push(self, value: float) -> None:
        if self._shift is None:
            self._shift = value
        if len(self._buf) == self._buf.maxlen:
            old = self._buf[0] - self._shift
            self._sum -= old
            self._sumsq -= old * old
        self._buf.append(value)
        s = value - self._shift
        self._sum += s
        self._sumsq += s * s
        self._pushes += 1
        if self._pushes % _RESYNC_EVERY == 0:
            self._resync()

    def _resync(self) -> None:
        arr = np.asarray(self._buf, dtype=np.float64)
        self._shift = float(arr.mean())
        shifted = arr - self._shift
        self._sum = float(shifted.sum())
        self._sumsq = float((shifted * shifted).sum())

    @property
    def count(self) -> int:
        return len(self._buf)

    def mean(self) -> float:
        n = len(self._buf)
        return self._shift + self._sum / n if n else 0.0

    def sigma(self) -> float:
        n = len(self._buf)
        if n < 2:
            return 0.0
        var = (self._sumsq - self._sum * self._sum / n) / (n - 1)
        return math.sqrt(max(var, 0.0))


class ChannelStats:
    """Trailing scale estimates for all channels of one patient's stream."""

    def __init__(self, window: int = DEFAULT_STATS_WINDOW):
        self.window = window
        self._per_channel = {name: TrailingStats(window) for name in CHANNELS}

    def push_frame(self, frame: SensorFrame) -> None:
        for name in CHANNELS:
            self._per_channel[name].push(frame.channels[name])

    def count(self, channel: str) -> int:
        return self._per_channel[channel].count

    def mean(self, channel: str) -> float:
        return self._per_channel[channel].mean()

    def sigma(self, channel: str) -> float:
        """Scale used for normalization: sample sigma floored at epsilon."""
        return max(self._per_channel[channel].sigma(), SIGMA_EPS)


def update_channel_stats(stats: ChannelStats, frame: SensorFrame) -> ChannelStats:
    """Fold one validated frame into the trailing per-channel statistics."""
    stats.push_frame(frame)
    return stats


@dataclass(frozen=True)
class NormalizedFrame:
    """Frame with unitless channels; carries the sigma used per channel.

    Multiplying each normalized value by its sigma reproduces the raw
    reading. Channels whose sigma sat at the epsilon floor are listed in
    low_variance; their values are raw readings scaled by 1/epsilon.
    """

    device_id: str
    seq: int
    t_ms: int
    channels: dict[str, float]
    sigmas: dict[str, float]
    low_variance: tuple[str, ...] = ()
    context: dict[str, object] | None = None

    def channel_vector(self) -> np.ndarray:
        return np.array([self.channels[name] for name in CHANNELS], dtype=np.float64)


def normalize(frame: SensorFrame, stats: ChannelStats) -> NormalizedFrame:
    """Divide each channel by its trailing sigma (floored at epsilon)."""
    for name in CHANNELS:
        if stats.count(name) < 1:
            raise ValidationError(f"no statistics for channel {name} yet")
    scaled: dict[str, float] = {}
    sigmas: dict[str, float] = {}
    flat: list[str] = []
    for name in CHANNELS:
        sigma = stats.sigma(name)
        sigmas[name] = sigma
        scaled[name] = frame.channels[name] / sigma
        if sigma <= SIGMA_EPS:
            flat.append(name)
    return NormalizedFrame(
        device_id=frame.device_id,
        seq=frame.seq,
        t_ms=frame.t_ms,
        channels=scaled,
        sigmas=sigmas,
        low_variance=tuple(flat),
        context=frame.context,
    )


class Gateway:
    """Stateful intake: dedupe, then stats update, then normalization.

    Statistics fold the new frame in before the division, so the very
    first frame of a stream normalizes against a single-sample window
    (sigma at the floor) rather than failing.
    """

    def __init__(self, stats_window: int = DEFAULT_STATS_WINDOW):
        self.stats_window = stats_window
        self.dedupe = Deduper()
        self._stats: dict[str, ChannelStats] = {}
        self.accepted = 0
        self.duplicates = 0

    def stats_for(self, device_id: str) -> ChannelStats:
        if device_id not in self._stats:
            self._stats[device_id] = ChannelStats(self.stats_window)
        return self._stats[device_id]

    def ingest(self, frame: SensorFrame) -> NormalizedFrame | None:
        """Returns the normalized frame, or None when it was a duplicate."""
        if not self.dedupe.accept(frame):
            self.duplicates += 1
            return None
        self.accepted += 1
        stats = update_channel_stats(self.stats_for(frame.device_id), frame)
        return normalize(frame, stats)

    def ingest_line(self, line: str) -> NormalizedFrame | None:
        return self.ingest(decode_frame(line))


def encode_normalized(nf: NormalizedFrame) -> str:
    doc = {
        "v": WIRE_VERSION,
        "device_id": nf.device_id,
        "seq": nf.seq,
        "t_ms": nf.t_ms,
        "channels": {name: nf.channels[name] for name in CHANNELS},
        "sigmas": {name: nf.sigmas[name] for name in CHANNELS},
        "low_variance": list(nf.low_variance),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
