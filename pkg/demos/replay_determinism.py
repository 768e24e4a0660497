"""Simulate a lossy fleet once, replay the log twice, compare hashes.

The replay path is the audit trail for the whole system: same raw log,
same config, same seed must give byte-identical predictions. Run this
after any refactor that touches the gateway, the twin, or the net.
"""

import dataclasses
import json
import tempfile
from pathlib import Path

from cardiotwin.pipeline import ScenarioConfig, run_scenario, simulate_to_dir
from cardiotwin.scaling import ScalingConfig, StageSpec
from cardiotwin.telemetry import FleetConfig

# dev0002 forwards through two neighbors, so most of its frames arrive
# twice and the dedupe pass has real work to do.
fleet = FleetConfig(device_count=5, horizon_ticks=200, seed=3,
                    drop_rate=0.25, max_attempts=2,
                    neighbor_map={"dev0002": ("dev0001", "dev0003")})

with tempfile.TemporaryDirectory() as tmp:
    sim = Path(tmp) / "sim"
    simulate_to_dir(fleet, sim)
    summary = json.loads((sim / "sim_summary.json").read_text())
    print("fleet:", {k: summary[k]
                     for k in ("generated", "delivered", "dropped", "duplicated")})
    assert summary["generated"] == summary["delivered"] + summary["dropped"]

    base = ScenarioConfig(
        mode="replay",
        fleet=fleet,
        scaling=ScalingConfig(phi=0.0, base_resolution=16,
                              stages=(StageSpec(3, 8, 1), StageSpec(3, 16, 1))),
        raw_in=str(sim / "raw.ndjson"),
        outcomes_in=str(sim / "outcomes.ndjson"),
        out_dir=str(Path(tmp) / "run_a"),
        seed=3,
    )
    a = run_scenario(base)
    b = run_scenario(dataclasses.replace(base, out_dir=str(Path(tmp) / "run_b")))

    print("run a:", a.counts)
    print("hash a:", a.predictions_hash)
    print("hash b:", b.predictions_hash)
    print("identical:", a.predictions_hash == b.predictions_hash)
