"""Wearable-fleet simulator: generates vital-sign frames and delivers them.

Each simulated device produces one frame per tick from a mean-reverting
vitals model around a per-patient baseline. Scheduled event windows shift
the vitals toward an abnormal regime (tachycardia, hypotension, desaturation)
and are recorded as ground-truth outcome labels so downstream feedback and
evaluation have something real to compare against.

Delivery is at-least-once: a frame may travel directly or be relayed through
neighbor devices, links may drop it, senders retry, and the gateway dedupes
on (device_id, seq). Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, RoutingError

# Fixed channel order; every frame in a run carries exactly these.
CHANNELS = ("hr_bpm", "sbp_mmhg", "dbp_mmhg", "spo2_pct", "activity_level")

# Per-channel noise scale at noise_scale=1 (raw units).
_NOISE_SCALE = {
    "hr_bpm": 2.0,
    "sbp_mmhg": 3.0,
    "dbp_mmhg": 2.0,
    "spo2_pct": 0.4,
    "activity_level": 0.05,
}

# Mean-reversion factor of the AR(1) fluctuation around baseline.
_REVERSION = 0.65

# Abnormal-regime shift applied inside an event window, scaled by severity.
_EVENT_SHIFT = {
    "hr_bpm": 45.0,
    "sbp_mmhg": -28.0,
    "dbp_mmhg": -14.0,
    "spo2_pct": -7.0,
    "activity_level": 0.0,
}


@dataclass(frozen=True)
class EventWindow:
    """Half-open tick range [start, end) during which vitals go abnormal."""

    start: int
    end: int
    severity: float = 1.0


@dataclass(frozen=True)
class PatientProfile:
    """Baseline vitals plus noise and event schedule for one device/patient."""

    hr_bpm: float = 70.0
    sbp_mmhg: float = 120.0
    dbp_mmhg: float = 80.0
    spo2_pct: float = 98.0
    activity_level: float = 0.1
    noise_scale: float = 1.0
    events: tuple[EventWindow, ...] = ()
    location: str = "home"

    def __post_init__(self):
        if min(self.hr_bpm, self.sbp_mmhg, self.dbp_mmhg, self.spo2_pct) <= 0:
            raise ConfigError(f"profile baselines must be positive, got {self}")
        if self.sbp_mmhg <= self.dbp_mmhg:
            raise ConfigError(
                f"systolic baseline {self.sbp_mmhg} must exceed diastolic {self.dbp_mmhg}"
            )
        if not 0.0 <= self.activity_level <= 1.0:
            raise ConfigError(f"activity baseline must be in [0, 1], got {self.activity_level}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        for ev in self.events:
            if ev.end <= ev.start or ev.start < 0:
                raise ConfigError(f"bad event window {ev}")

    def in_event(self, tick: int) -> bool:
        return any(ev.start <= tick < ev.end for ev in self.events)


@dataclass(frozen=True)
class SensorFrame:
    """One multi-channel reading from a device at a logical timestamp."""

    device_id: str
    seq: int
    t_ms: int
    channels: dict[str, float]
    context: dict[str, object] | None = None

    def channel_vector(self) -> np.ndarray:
        return np.array([self.channels[name] for name in CHANNELS], dtype=np.float64)


@dataclass(frozen=True)
class DeliveryRecord:
    """Outcome of one delivery attempt chain for a frame over one path."""

    device_id: str
    seq: int
    path: str  # "direct" or "via:<neighbor_id>"
    attempt: int  # number of the final attempt (1-based)
    status: str  # "delivered" | "dropped" | "duplicated"


@dataclass(frozen=True)
class FleetConfig:
    device_count: int
    horizon_ticks: int
    tick_ms: int = 1000
    seed: int = 0
    neighbor_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    patient_profiles: dict[str, PatientProfile] = field(default_factory=dict)
    drop_rate: float = 0.0
    max_attempts: int = 8

    def __post_init__(self):
        if self.device_count < 0:
            raise ConfigError(f"device_count must be >= 0, got {self.device_count}")
        if self.horizon_ticks <= 0:
            raise ConfigError(f"horizon_ticks must be positive, got {self.horizon_ticks}")
        if self.tick_ms <= 0:
            raise ConfigError(f"tick_ms must be positive, got {self.tick_ms}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError(f"drop_rate must be in [0, 1), got {self.drop_rate}")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")
        ids = set(self.device_ids())
        for dev, neighbors in self.neighbor_map.items():
            if dev not in ids:
                raise ConfigError(f"neighbor_map lists unknown device {dev!r}")
            for n in neighbors:
                if n not in ids:
                    raise ConfigError(f"device {dev!r} lists unknown neighbor {n!r}")
                if n == dev:
                    raise ConfigError(f"device {dev!r} lists itself as neighbor")

    def device_ids(self) -> list[str]:
        return [device_name(i) for i in range(self.device_count)]

    def profile_for(self, device_id: str) -> PatientProfile:
        if device_id in self.patient_profiles:
            return self.patient_profiles[device_id]
        return default_profile(device_id, self.seed, self.horizon_ticks)


def device_name(index: int) -> str:
    return f"dev{index + 1:04d}"


def default_profile(device_id: str, seed: int, horizon_ticks: int) -> PatientProfile:
    """Deterministic per-device baseline with one or two abnormal windows."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _device_key(device_id), 0xBA5E]))
    events = []
    if horizon_ticks >= 20:
        span = max(4, horizon_ticks // 12)
        first = int(rng.integers(horizon_ticks // 4, horizon_ticks // 2))
        events.append(EventWindow(first, min(first + span, horizon_ticks)))
        if horizon_ticks >= 60:
            second = int(rng.integers(2 * horizon_ticks // 3, horizon_ticks - span))
            events.append(EventWindow(second, min(second + span, horizon_ticks)))
    return PatientProfile(
        hr_bpm=float(rng.uniform(62, 78)),
        sbp_mmhg=float(rng.uniform(112, 130)),
        dbp_mmhg=float(rng.uniform(70, 84)),
        spo2_pct=float(rng.uniform(96, 99)),
        activity_level=float(rng.uniform(0.05, 0.3)),
        noise_scale=1.0,
        events=tuple(events),
    )


def _device_key(device_id: str) -> int:
    """Stable, platform-independent integer derived from a device id."""
    return zlib.crc32(device_id.encode("utf-8"))


class VitalsGenerator:
    """Mean-reverting vitals stream for one device.

    The fluctuation around baseline is an AR(1) process driven by noise drawn
    from a per-device RNG stream, so the value at tick t is a pure function of
    (device_id, profile, seed, t). `series` computes a whole horizon at once;
    `frame_at` recomputes a single tick from scratch and must agree exactly.
    """

    def __init__(self, device_id: str, profile: PatientProfile, seed: int, tick_ms: int = 1000):
        self.device_id = device_id
        self.profile = profile
        self.seed = seed
        self.tick_ms = tick_ms

    def _noise(self, n_ticks: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, _device_key(self.device_id)])
        )
        scales = np.array([_NOISE_SCALE[c] for c in CHANNELS]) * self.profile.noise_scale
        return rng.standard_normal((n_ticks, len(CHANNELS))) * scales

    def series(self, n_ticks: int) -> np.ndarray:
        """Channel matrix of shape (n_ticks, 5) for ticks 0..n_ticks-1."""
        prof = self.profile
        base = np.array(
            [prof.hr_bpm, prof.sbp_mmhg, prof.dbp_mmhg, prof.spo2_pct, prof.activity_level]
        )
        noise = self._noise(n_ticks)
        # AR(1): x_t = _REVERSION * x_{t-1} + e_t, per channel.
        fluct = lfilter([1.0], [1.0, -_REVERSION], noise, axis=0)
        values = base[None, :] + fluct
        for t in range(n_ticks):
            if prof.in_event(t):
                sev = max(ev.severity for ev in prof.events if ev.start <= t < ev.end)
                for k, name in enumerate(CHANNELS):
                    values[t, k] += _EVENT_SHIFT[name] * sev
        return _clamp_channels(values)

    def frame_at(self, tick: int) -> SensorFrame:
        if tick < 0:
            raise ConfigError(f"tick must be >= 0, got {tick}")
        row = self.series(tick + 1)[tick]
        prof = self.profile
        context = {
            "location": prof.location,
            "activity": "active" if row[4] > 0.5 else "rest",
        }
        return SensorFrame(
            device_id=self.device_id,
            seq=tick + 1,
            t_ms=(tick + 1) * self.tick_ms,
            channels={name: float(row[k]) for k, name in enumerate(CHANNELS)},
            context=context,
        )


def _clamp_channels(values: np.ndarray) -> np.ndarray:
    """Force generated vitals into their physical ranges.

    Systolic is rebuilt as diastolic + pulse pressure so sbp > dbp always holds.
    """
    out = values.copy()
    out[:, 0] = np.clip(out[:, 0], 1.0, 300.0)  # hr
    pulse = np.clip(values[:, 1] - values[:, 2], 5.0, None)
    out[:, 2] = np.clip(out[:, 2], 10.0, None)  # dbp
    out[:, 1] = out[:, 2] + pulse  # sbp
    out[:, 3] = np.clip(out[:, 3], 50.0, 100.0)  # spo2
    out[:, 4] = np.clip(out[:, 4], 0.0, 1.0)  # activity
    return out


def synth_frame(device_id: str, tick: int, profile: PatientProfile, seed: int) -> SensorFrame:
    """Single deterministic frame; pure in (device_id, tick, profile, seed)."""
    return VitalsGenerator(device_id, profile, seed).frame_at(tick)


# ---------------------------------------------------------------------------
# Delivery simulation
# ---------------------------------------------------------------------------


class LinkState:
    """Lossy link with retry; randomness comes from its own seeded stream."""

    def __init__(self, drop_rate: float = 0.0, max_attempts: int = 8, seed: int = 0):
        if not 0.0 <= drop_rate < 1.0:
            raise ConfigError(f"drop_rate must be in [0, 1), got {drop_rate}")
        self.drop_rate = drop_rate
        self.max_attempts = max_attempts
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0x71BC]))

    def attempt(self) -> bool:
        """True when a single transmission survives the link."""
        if self.drop_rate == 0.0:
            return True
        return bool(self.rng.random() >= self.drop_rate)


def send_with_retry(frame: SensorFrame, path: str, link: LinkState) -> DeliveryRecord:
    for attempt in range(1, link.max_attempts + 1):
        if link.attempt():
            return DeliveryRecord(frame.device_id, frame.seq, path, attempt, "delivered")
    return DeliveryRecord(frame.device_id, frame.seq, path, link.max_attempts, "dropped")


def relay(
    frame: SensorFrame,
    neighbor_id: str,
    link: LinkState,
    neighbor_map: dict[str, tuple[str, ...]],
) -> DeliveryRecord:
    """Store-and-forward a frame through a neighboring device."""
    neighbors = neighbor_map.get(frame.device_id, ())
    if neighbor_id not in neighbors:
        raise RoutingError(
            f"{neighbor_id!r} is not a neighbor of {frame.device_id!r} (has {list(neighbors)})"
        )
    return send_with_retry(frame, f"via:{neighbor_id}", link)


# ---------------------------------------------------------------------------
# Fleet run
# ---------------------------------------------------------------------------


@dataclass
class FrameLog:
    """Result of a completed fleet run.

    `frames` holds the deduplicated delivered frames ordered by
    (t_ms, device_id, seq) — exactly what the gateway would accept.
    `records` holds every delivery attempt chain in generation order.
    `outcomes` holds the ground-truth abnormal label per generated frame.
    """

    frames: list[SensorFrame]
    records: list[DeliveryRecord]
    outcomes: list[dict]
    generated: int
    delivered: int
    dropped: int

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for fr in self.frames:
            h.update(encode_frame(fr).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def run_fleet(config: FleetConfig) -> FrameLog:
    """Generate and deliver every frame of the configured fleet.

    Iteration follows device -> delivery path -> tick; one frame exists per
    (device, tick) and each configured path attempts to deliver it, so relays
    can produce duplicates that dedupe removes. The delivered log is then
    ordered by (t_ms, device_id, seq).
    """
    delivered: dict[tuple[str, int], SensorFrame] = {}
    records: list[DeliveryRecord] = []
    outcomes: list[dict] = []
    generated = 0
    dropped = 0

    for dev_idx, device_id in enumerate(config.device_ids()):
        profile = config.profile_for(device_id)
        gen = VitalsGenerator(device_id, profile, config.seed, config.tick_ms)
        series = gen.series(config.horizon_ticks)
        frames = []
        for tick in range(config.horizon_ticks):
            row = series[tick]
            context = {
                "location": profile.location,
                "activity": "active" if row[4] > 0.5 else "rest",
            }
            frame = SensorFrame(
                device_id=device_id,
                seq=tick + 1,
                t_ms=(tick + 1) * config.tick_ms,
                channels={name: float(row[k]) for k, name in enumerate(CHANNELS)},
                context=context,
            )
            frames.append(frame)
            generated += 1
            outcomes.append(
                {
                    "patient_id": device_id,
                    "t_ms": frame.t_ms,
                    "outcome": int(profile.in_event(tick)),
                    "origin": "simulator",
                }
            )

        neighbors = config.neighbor_map.get(device_id, ())
        paths = [f"via:{n}" for n in neighbors] if neighbors else ["direct"]
        frame_ok = [False] * len(frames)
        for path_idx, path in enumerate(paths):
            link = LinkState(
                config.drop_rate,
                config.max_attempts,
                seed=config.seed ^ (_device_key(device_id) + 7919 * path_idx),
            )
            for tick, frame in enumerate(frames):
                rec = send_with_retry(frame, path, link)
                if rec.status == "delivered":
                    key = (frame.device_id, frame.seq)
                    if key in delivered:
                        rec = DeliveryRecord(rec.device_id, rec.seq, rec.path, rec.attempt, "duplicated")
                    else:
                        delivered[key] = frame
                        frame_ok[tick] = True
                records.append(rec)
        dropped += sum(1 for ok in frame_ok if not ok)

    ordered = sorted(delivered.values(), key=lambda f: (f.t_ms, f.device_id, f.seq))
    return FrameLog(
        frames=ordered,
        records=records,
        outcomes=outcomes,
        generated=generated,
        delivered=len(ordered),
        dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------


def encode_frame(frame: SensorFrame) -> str:
    """Canonical wire line: versioned JSON with sorted keys, no whitespace."""
    doc: dict[str, object] = {
        "v": 1,
        "device_id": frame.device_id,
        "seq": frame.seq,
        "t_ms": frame.t_ms,
        "channels": {name: frame.channels[name] for name in CHANNELS},
    }
    if frame.context is not None:
        doc["context"] = frame.context
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_frames(path, frames: list[SensorFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(encode_frame(fr))
            fh.write("\n")


def write_outcomes(path, outcomes: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in outcomes:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
