"""Per-patient circulatory twin: a two-element lumped-parameter model.

The twin tracks one pressure state per patient with a compliance C and a
peripheral resistance R. Inflow Q is driven by the patient's normalized
heart rate times a stroke-volume constant, and pressure follows the
classic relation

    dP/dt = Q / C - P / (R C)

advanced by an explicit Euler update, which is stable for dt < R C and
has the fixed point P* = Q R. This is a deliberate surrogate at desk
scale: the observables are blood flow and pressure, not anatomy.

Next to the dynamics the twin keeps rolling traces (normalized heart
rate, normalized systolic pressure, simulated pressure, simulated flow),
each exactly as long as the classifier's input resolution, zero-padded
during warm-up. `rasterize` tiles the four traces into a square image
the classifier consumes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError, ValidationError
from .gateway import NormalizedFrame

TRACE_NAMES = ("hr", "sbp", "pressure", "flow")


def flow_from_hr(hr: float, stroke_volume: float) -> float:
    """Inflow from heart rate with per-second scaling: Q = hr/60 * SV."""
    return hr / 60.0 * stroke_volume


def windkessel_step(pressure: float, flow: float, resistance: float,
                    compliance: float, dt_s: float) -> float:
    """One explicit Euler step of dP/dt = Q/C - P/(RC).

    P <- P + dt * (Q/C - P/(RC)). Stable for dt < R*C; P = Q*R is a
    stationary point of the update.
    """
    if resistance <= 0 or compliance <= 0:
        raise ParameterError(
            f"resistance and compliance must be positive, got R={resistance}, C={compliance}"
        )
    if dt_s < 0:
        raise ParameterError(f"dt_s must be >= 0, got {dt_s}")
    if not all(map(math.isfinite, (pressure, flow, resistance, compliance, dt_s))):
        raise NumericError(
            f"non-finite twin input: P={pressure}, Q={flow}, R={resistance}, "
            f"C={compliance}, dt={dt_s}"
        )
    out = pressure + dt_s * (flow / compliance - pressure / (resistance * compliance))
    if not math.isfinite(out):
        raise NumericError(f"twin pressure went non-finite: {out}")
    return out


@dataclass(frozen=True)
class TwinParams:
    """Physiological constants of one patient's twin.

    The default stroke volume of 60 cancels the per-minute scaling, so
    resting inflow numerically matches the (normalized) heart-rate signal
    and the resting fixed point sits at hr * R.
    """

    resistance: float = 1.0
    compliance: float = 1.0
    stroke_volume: float = 60.0

    def __post_init__(self):
        if min(self.resistance, self.compliance, self.stroke_volume) <= 0:
            raise ParameterError(f"twin parameters must be positive, got {self}")


@dataclass
class TwinState:
    """Dynamic state of one patient's twin, traces included.

    Trace buffers are fixed length (the classifier resolution); before
    warm-up the missing prefix reads as zeros.
    """

    patient_id: str
    trace_len: int
    params: TwinParams = field(default_factory=TwinParams)
    pressure: float = 0.0
    last_t_ms: int | None = None
    updates: int = 0
    traces: dict[str, deque] = field(init=False)

    def __post_init__(self):
        if self.trace_len < 1:
            raise ParameterError(f"trace_len must be >= 1, got {self.trace_len}")
        self.traces = {name: deque(maxlen=self.trace_len) for name in TRACE_NAMES}

    def trace_array(self, name: str) -> np.ndarray:
        """Trace as a full-length array, zero-padded on the old side."""
        buf = self.traces[name]
        out = np.zeros(self.trace_len, dtype=np.float64)
        if buf:
            out[self.trace_len - len(buf):] = buf
        return out

    def to_json(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "pressure": self.pressure,
            "params": {
                "resistance": self.params.resistance,
                "compliance": self.params.compliance,
                "stroke_volume": self.params.stroke_volume,
            },
            "last_t_ms": self.last_t_ms,
            "updates": self.updates,
            "traces": {name: self.trace_array(name).tolist() for name in TRACE_NAMES},
        }


def step_twin(state: TwinState, nf: NormalizedFrame, dt_s: float) -> TwinState:
    """Advance one twin by one normalized frame over dt_s seconds.

    Nothing is committed unless the pressure update succeeds, so a numeric
    failure leaves the state exactly as it was.
    """
    if nf.device_id != state.patient_id:
        raise ValidationError(
            f"frame for {nf.device_id!r} fed to twin of {state.patient_id!r}"
        )
    if dt_s <= 0:
        raise ValidationError(f"dt_s must be positive, got {dt_s}")
    p = state.params
    flow = flow_from_hr(nf.channels["hr_bpm"], p.stroke_volume)
    new_pressure = windkessel_step(state.pressure, flow, p.resistance, p.compliance, dt_s)

    state.pressure = new_pressure
    state.last_t_ms = nf.t_ms
    state.updates += 1
    state.traces["hr"].append(nf.channels["hr_bpm"])
    state.traces["sbp"].append(nf.channels["sbp_mmhg"])
    state.traces["pressure"].append(new_pressure)
    state.traces["flow"].append(flow)
    return state


@dataclass(frozen=True)
class FeatureImage:
    """Square multi-channel tensor handed to the classifier, with provenance."""

    tensor: np.ndarray  # shape (r, r, k)
    patient_id: str
    t_ms: int | None


def rasterize(state: TwinState) -> FeatureImage:
    """Tile the four traces of a twin into an (r, r, 4) image.

    Each trace becomes one channel: the length-r trace is the row,
    repeated down the image. Pure in the state; rasterizing the same
    state twice yields identical tensors.
    """
    r = state.trace_len
    img = np.empty((r, r, len(TRACE_NAMES)), dtype=np.float64)
    for c, name in enumerate(TRACE_NAMES):
        row = state.trace_array(name)
        if not np.all(np.isfinite(row)):
            raise NumericError(f"non-finite entry in twin trace {name!r}")
        img[:, :, c] = row[None, :]
    return FeatureImage(tensor=img, patient_id=state.patient_id, t_ms=state.last_t_ms)


class TwinRegistry:
    """Creates and steps one twin per patient id.

    dt comes from consecutive frame timestamps; the first frame of a
    patient uses the configured default tick length.
    """

    def __init__(self, trace_len: int, params: TwinParams = TwinParams(),
                 default_dt_s: float = 1.0):
        if default_dt_s <= 0:
            raise ParameterError(f"default_dt_s must be positive, got {default_dt_s}")
        self.trace_len = trace_len
        self.params = params
        self.default_dt_s = default_dt_s
        self._twins: dict[str, TwinState] = {}

    def get(self, patient_id: str) -> TwinState:
        if patient_id not in self._twins:
            self._twins[patient_id] = TwinState(
                patient_id=patient_id, trace_len=self.trace_len, params=self.params
            )
        return self._twins[patient_id]

    def step(self, nf: NormalizedFrame) -> TwinState:
        state = self.get(nf.device_id)
        if state.last_t_ms is None:
            dt = self.default_dt_s
        else:
            dt = (nf.t_ms - state.last_t_ms) / 1000.0
        return step_twin(state, nf, dt)

    def ids(self) -> list[str]:
        return sorted(self._twins)

    def __contains__(self, patient_id: str) -> bool:
        return patient_id in self._twins

    def __len__(self) -> int:
        return len(self._twins)
