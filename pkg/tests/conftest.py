import numpy as np
import pytest

from cardiotwin.scaling import ScalingConfig, StageSpec
from cardiotwin.telemetry import CHANNELS, SensorFrame


@pytest.fixture
def tiny_config() -> ScalingConfig:
    """Smallest legal classifier config; keeps unit tests fast."""
    return ScalingConfig(
        phi=0.0,
        base_resolution=16,
        stages=(StageSpec(3, 8, 1), StageSpec(3, 16, 1)),
    )


def make_frame(device_id="dev0001", seq=1, t_ms=1000, hr=72.0, sbp=120.0,
               dbp=80.0, spo2=98.0, activity=0.1, context=None) -> SensorFrame:
    return SensorFrame(
        device_id=device_id,
        seq=seq,
        t_ms=t_ms,
        channels={
            "hr_bpm": hr,
            "sbp_mmhg": sbp,
            "dbp_mmhg": dbp,
            "spo2_pct": spo2,
            "activity_level": activity,
        },
        context=context,
    )


def frames_from_rows(rows: np.ndarray, device_id="dev0001", tick_ms=1000):
    """SensorFrames from a (n, 5) channel matrix, seq starting at 1."""
    out = []
    for i, row in enumerate(np.asarray(rows, dtype=float)):
        out.append(SensorFrame(
            device_id=device_id,
            seq=i + 1,
            t_ms=(i + 1) * tick_ms,
            channels={name: float(row[k]) for k, name in enumerate(CHANNELS)},
        ))
    return out
