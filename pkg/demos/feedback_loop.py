"""
The clinician feedback loop, end to end in one process
======================================================

This walks the full review cycle against an in-process server state:

  1. frames stream in and each publishes a risk prediction,
  2. a clinician overrides one call, which blends into the next event,
  3. contradicting outcomes push a residual past three sigma,
  4. the flagged image and corrected label queue up, and two of them
     trigger a fine-tune pass that bumps the model version.

The local model is pinned to p = 0.8 here so the fusion arithmetic can
be followed by eye: with alpha 0.5 and one override at 0.6,
0.5 * 0.8 + 0.5 * 0.6 = 0.7 exactly.
"""

import tempfile
from pathlib import Path

from cardiotwin.fusion import FusionConfig
from cardiotwin.gateway import decode_frame
from cardiotwin.pipeline import CloudState, ScenarioConfig, simulate_to_dir
from cardiotwin.scaling import ScalingConfig, StageSpec
from cardiotwin.telemetry import FleetConfig

fleet = FleetConfig(device_count=2, horizon_ticks=30, seed=8)

with tempfile.TemporaryDirectory() as tmp:
    sim = Path(tmp) / "sim"
    simulate_to_dir(fleet, sim)
    config = ScenarioConfig(
        mode="replay",
        fleet=fleet,
        scaling=ScalingConfig(phi=0.0, base_resolution=16,
                              stages=(StageSpec(3, 8, 1), StageSpec(3, 16, 1))),
        fusion=FusionConfig(alpha=0.5),
        raw_in=str(sim / "raw.ndjson"),
        out_dir=str(Path(tmp) / "out"),
        seed=8,
        fixed_p_local=0.8,
        fine_tune_batch=2,
    )
    state = CloudState(config)
    frames = [decode_frame(line)
              for line in (sim / "raw.ndjson").read_text().splitlines()]
    mine = [f for f in frames if f.device_id == "dev0001"]
    published = []

    def stream(n):
        for frame in mine[len(published):len(published) + n]:
            published.extend(state.process_frames([frame]))

    def report(patient_id, t_ms, outcome):
        return state.apply_feedback({"patient_id": patient_id,
                                     "t_ms": t_ms, "outcome": outcome})

    # Step 1: a few ticks of ordinary streaming.
    stream(12)
    print(f"published {len(published)} predictions for dev0001, "
          f"p = {published[-1].prediction.p_arrest}")

    # Step 2: an override lands before the next tick and fuses into it.
    ack = state.apply_feedback({"patient_id": "dev0001", "override_p": 0.6})
    print(f"override ack: {ack}")
    stream(1)
    print(f"next event: p = {published[12].prediction.p_arrest}  "
          f"source = {published[12].prediction.source}")

    # Step 3: six confirming outcomes give a tight residual history,
    # then one contradiction jumps the residual by 0.8.
    for event in published[:6]:
        report("dev0001", event.prediction.t_ms, 1)
    flagged = report("dev0001", published[6].prediction.t_ms, 0)
    print(f"contradicting outcome: anomaly = {flagged['anomaly']}, "
          f"queued for fine-tune = {flagged['queued']}")

    stream(1)
    print(f"next event carries the anomaly badge: {published[13].anomaly}")

    # Step 4: the excursion widened the band, so the history must settle
    # before a second contradiction clears three sigma and fills the batch.
    stream(4)
    for event in published[7:17]:
        report("dev0001", event.prediction.t_ms, 1)
    second = report("dev0001", published[17].prediction.t_ms, 0)
    print(f"second contradiction: anomaly = {second['anomaly']}, "
          f"fine_tuned = {second['fine_tuned']}, "
          f"model_version = {second['model_version']}")
