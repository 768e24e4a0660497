import dataclasses
import json

import pytest

from cardiotwin.errors import (
    ConfigError,
    FrameParseError,
    UnknownReferenceError,
    ValidationError,
)
from cardiotwin.fusion import FusionConfig
from cardiotwin.pipeline import (
    CloudState,
    ScenarioConfig,
    export_report,
    file_sha256,
    run_scenario,
    simulate_to_dir,
)
from cardiotwin.scaling import ScalingConfig, StageSpec
from cardiotwin.telemetry import FleetConfig


def small_scaling():
    return ScalingConfig(phi=0.0, base_resolution=16,
                         stages=(StageSpec(3, 8, 1), StageSpec(3, 16, 1)))


def small_fleet(devices=3, ticks=20, seed=1, **kw):
    return FleetConfig(device_count=devices, horizon_ticks=ticks, seed=seed, **kw)


def replay_config(tmp_path, sim_dir, **over):
    base = dict(
        mode="replay",
        fleet=small_fleet(),
        scaling=small_scaling(),
        raw_in=str(sim_dir / "raw.ndjson"),
        outcomes_in=str(sim_dir / "outcomes.ndjson"),
        out_dir=str(tmp_path / "out"),
        seed=1,
    )
    base.update(over)
    return ScenarioConfig(**base)


@pytest.fixture
def sim_dir(tmp_path):
    d = tmp_path / "sim"
    simulate_to_dir(small_fleet(), d)
    return d


# -- configuration ----------------------------------------------------------


def test_scenario_config_from_json_round_trip():
    doc = {
        "mode": "replay",
        "seed": 9,
        "fleet": {"devices": 5, "ticks": 100, "tick_ms": 500, "drop_rate": 0.1},
        "scaling": {"phi": 1.0, "base_resolution": 24},
        "fusion": {"alpha": 0.4, "threshold": 0.6},
        "raw_in": "x/raw.ndjson",
        "residual_window": 2048,
    }
    config = ScenarioConfig.from_json(doc)
    assert config.fleet.device_count == 5
    assert config.fleet.seed == 9
    assert config.scaling.phi == 1.0
    assert config.fusion.alpha == 0.4
    assert config.residual_window == 2048


def test_scenario_config_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        ScenarioConfig(mode="interactive")


def test_config_file_loading(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({"mode": "replay", "raw_in": "r.ndjson"}))
    config = ScenarioConfig.load(path)
    assert config.raw_in == "r.ndjson"
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(bad)
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.json")


# -- simulate ---------------------------------------------------------------


def test_simulate_writes_conserved_logs(tmp_path):
    result = simulate_to_dir(small_fleet(devices=2, ticks=15, seed=3), tmp_path / "s")
    counts = result["counts"]
    assert counts["conserved"] is True
    assert counts["generated"] == 30
    raw_lines = (tmp_path / "s" / "raw.ndjson").read_text().splitlines()
    assert len(raw_lines) == counts["delivered"]
    outcome_lines = (tmp_path / "s" / "outcomes.ndjson").read_text().splitlines()
    assert len(outcome_lines) == counts["generated"]


# -- replay -----------------------------------------------------------------


def test_replay_is_deterministic_and_conserving(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir)
    first = run_scenario(config)
    second = run_scenario(dataclasses.replace(config, out_dir=str(tmp_path / "out2")))
    assert first.predictions_hash == second.predictions_hash
    assert first.counts["conservation"] is True
    assert first.counts["accepted"] == first.counts["predictions"]
    out = tmp_path / "out"
    assert (out / "normalized.ndjson").exists()
    assert (out / "predictions.ndjson").exists()
    assert (out / "exit_report.json").exists()
    assert file_sha256(out / "predictions.ndjson") == first.predictions_hash


def test_replay_drops_duplicate_lines(tmp_path, sim_dir):
    raw = (sim_dir / "raw.ndjson").read_text().splitlines()
    doubled = tmp_path / "doubled.ndjson"
    doubled.write_text("\n".join(raw + raw[:10]) + "\n")
    config = replay_config(tmp_path, sim_dir, raw_in=str(doubled))
    report = run_scenario(config)
    assert report.counts["duplicates"] == 10
    assert report.counts["predictions"] == len(raw)
    # Predictions identical to the clean replay.
    clean = run_scenario(replay_config(tmp_path, sim_dir,
                                       out_dir=str(tmp_path / "clean")))
    assert report.predictions_hash == clean.predictions_hash


def test_replay_requires_an_input_log(tmp_path):
    with pytest.raises(ConfigError):
        run_scenario(replay_config(tmp_path, tmp_path, raw_in=None))
    with pytest.raises(ConfigError):
        run_scenario(replay_config(tmp_path, tmp_path,
                                   raw_in=str(tmp_path / "absent.ndjson")))


def test_replay_annotates_errors_with_stage_and_record(tmp_path, sim_dir):
    raw = (sim_dir / "raw.ndjson").read_text().splitlines()
    corrupted = tmp_path / "corrupt.ndjson"
    corrupted.write_text("\n".join(raw[:5] + ["{broken"] + raw[5:]) + "\n")
    config = replay_config(tmp_path, sim_dir, raw_in=str(corrupted))
    with pytest.raises(FrameParseError) as err:
        run_scenario(config)
    message = str(err.value)
    assert "[gateway]" in message
    assert "corrupt.ndjson:6" in message
    # Partial output flushed before the failure.
    assert (tmp_path / "out" / "predictions.ndjson").exists()


def test_published_events_have_increasing_timestamps(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir)
    run_scenario(config)
    per_patient = {}
    with open(tmp_path / "out" / "predictions.ndjson") as fh:
        for line in fh:
            doc = json.loads(line)
            last = per_patient.get(doc["patient_id"])
            assert last is None or doc["t_ms"] > last
            per_patient[doc["patient_id"]] = doc["t_ms"]
    assert len(per_patient) == 3


# -- feedback path ----------------------------------------------------------


def feed_state(tmp_path, sim_dir, **over):
    config = replay_config(tmp_path, sim_dir, **over)
    state = CloudState(config)
    from cardiotwin.gateway import decode_frame

    with open(config.raw_in) as fh:
        frames = [decode_frame(line) for line in fh.read().splitlines()]
    events = []
    for frame in frames:
        events.extend(state.process_frames([frame]))
    return state, events


def test_feedback_requires_a_known_reference(tmp_path, sim_dir):
    state, events = feed_state(tmp_path, sim_dir)
    with pytest.raises(UnknownReferenceError):
        state.apply_feedback({"patient_id": "ghost", "override_p": 0.5})
    with pytest.raises(UnknownReferenceError):
        state.apply_feedback({"patient_id": "dev0001", "t_ms": 999999, "outcome": 1})
    with pytest.raises(ValidationError):
        state.apply_feedback({"patient_id": "dev0001"})
    with pytest.raises(ValidationError):
        state.apply_feedback({"patient_id": "dev0001", "t_ms": events[0].prediction.t_ms,
                              "outcome": 1, "override_p": 0.5})
    with pytest.raises(ValidationError):
        state.apply_feedback({"patient_id": "dev0001", "t_ms": events[0].prediction.t_ms,
                              "outcome": 2})


def test_override_joins_the_next_fusion_only(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir, fixed_p_local=0.8)
    config = dataclasses.replace(config, fusion=FusionConfig(alpha=0.5))
    state = CloudState(config)
    from cardiotwin.gateway import decode_frame

    with open(config.raw_in) as fh:
        frames = [decode_frame(line) for line in fh.read().splitlines()]
    one = [f for f in frames if f.device_id == "dev0001"]
    first = state.process_frames([one[0]])[0]
    assert first.prediction.p_arrest == 0.8
    assert first.prediction.source == "model"

    ack = state.apply_feedback({"patient_id": "dev0001", "override_p": 0.6, "weight": 1.0})
    assert ack["kind"] == "override"
    fused = state.process_frames([one[1]])[0]
    assert fused.prediction.p_arrest == pytest.approx(0.7, abs=1e-12)
    assert fused.prediction.source == "fused"
    assert fused.sources == ("clinician",)
    # Consumed: the event after that is local again.
    after = state.process_frames([one[2]])[0]
    assert after.prediction.source == "model"


def test_outcome_feedback_drives_the_residual_audit(tmp_path, sim_dir):
    state, events = feed_state(tmp_path, sim_dir, fixed_p_local=0.8)
    mine = [e for e in events if e.prediction.patient_id == "dev0001"]
    # Stable residuals first (p=0.8 vs outcome 1 -> -0.2 every time).
    for event in mine[:6]:
        ack = state.apply_feedback({
            "patient_id": "dev0001", "t_ms": event.prediction.t_ms, "outcome": 1,
        })
        assert ack["anomaly"] is False
    # Now a contradicting outcome: residual jumps to 0.8.
    ack = state.apply_feedback({
        "patient_id": "dev0001", "t_ms": mine[6].prediction.t_ms, "outcome": 0,
    })
    assert ack["anomaly"] is True
    assert ack["queued"] is True


def test_anomaly_badge_rides_the_next_event_once(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir, fixed_p_local=0.8)
    state = CloudState(config)
    from cardiotwin.gateway import decode_frame

    with open(config.raw_in) as fh:
        frames = [decode_frame(line) for line in fh.read().splitlines()]
    one = [f for f in frames if f.device_id == "dev0002"]
    events = []
    for frame in one[:8]:
        events.extend(state.process_frames([frame]))
    for event in events[:6]:
        state.apply_feedback({"patient_id": "dev0002",
                              "t_ms": event.prediction.t_ms, "outcome": 1})
    ack = state.apply_feedback({"patient_id": "dev0002",
                                "t_ms": events[6].prediction.t_ms, "outcome": 0})
    assert ack["anomaly"] is True
    flagged_event = state.process_frames([one[8]])[0]
    assert flagged_event.anomaly is True
    clear_event = state.process_frames([one[9]])[0]
    assert clear_event.anomaly is False


def test_enough_flagged_outcomes_trigger_one_fine_tune(tmp_path, sim_dir):
    state, events = feed_state(tmp_path, sim_dir, fixed_p_local=0.8,
                               fine_tune_batch=2)
    mine = [e for e in events if e.prediction.patient_id == "dev0001"]
    for event in mine[:4]:
        state.apply_feedback({"patient_id": "dev0001",
                              "t_ms": event.prediction.t_ms, "outcome": 1})
    assert state.model_version == 0
    a1 = state.apply_feedback({"patient_id": "dev0001",
                               "t_ms": mine[4].prediction.t_ms, "outcome": 0})
    assert a1["anomaly"] and a1["queued"] and not a1["fine_tuned"]
    # The 0.8 excursion widens the band, so the history has to settle
    # again before a second contradiction clears three sigma.
    for event in mine[5:15]:
        ack = state.apply_feedback({"patient_id": "dev0001",
                                    "t_ms": event.prediction.t_ms, "outcome": 1})
        assert ack["anomaly"] is False
    a2 = state.apply_feedback({"patient_id": "dev0001",
                               "t_ms": mine[15].prediction.t_ms, "outcome": 0})
    assert a2["anomaly"] is True
    assert a2["fine_tuned"] is True
    assert state.model_version == 1
    assert state.ft_queue == []
    # The clinician record supersedes the simulator's label.
    key = ("dev0001", mine[4].prediction.t_ms)
    assert state.outcomes[key].origin == "clinician"


# -- live and eval ----------------------------------------------------------


def test_live_mode_drains_everything_before_exit(tmp_path):
    config = ScenarioConfig(
        mode="live",
        fleet=FleetConfig(device_count=2, horizon_ticks=10, tick_ms=20, seed=2),
        scaling=small_scaling(),
        out_dir=str(tmp_path / "live"),
        seed=2,
    )
    report = run_scenario(config)
    assert report.counts["frames_generated"] == 20
    assert report.counts["predictions"] == 20
    assert report.counts["conservation"] is True
    lines = (tmp_path / "live" / "predictions.ndjson").read_text().splitlines()
    assert len(lines) == 20


def test_eval_mode_writes_one_row_per_config(tmp_path):
    config = ScenarioConfig(
        mode="eval",
        scaling=small_scaling(),
        out_dir=str(tmp_path / "eval"),
        seed=0,
        eval_phis=(0.0, 0.0),
        eval_samples=60,
        eval_epochs=1,
    )
    report = run_scenario(config)
    assert report.counts["rows"] == 2
    lines = (tmp_path / "eval" / "metrics.csv").read_text().splitlines()
    assert len(lines) == 3  # header + two rows


# -- report export ----------------------------------------------------------


def test_export_report_joins_and_counts_exclusions(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir)
    run_scenario(config)
    out = tmp_path / "out"
    # Keep only outcomes for two of the three devices: the rest of the
    # predictions must be excluded, not invented.
    kept = []
    with open(sim_dir / "outcomes.ndjson") as fh:
        for line in fh:
            if '"dev0003"' not in line:
                kept.append(line)
    (out / "outcomes.ndjson").write_text("".join(kept))
    summary = export_report(out, tmp_path / "report")
    assert summary["joined"] == 40
    assert summary["excluded_no_outcome"] == 20
    assert (tmp_path / "report" / "metrics.csv").exists()
    assert (tmp_path / "report" / "confusion.json").exists()
    assert (tmp_path / "report" / "summary.json").exists()


def test_export_report_is_byte_stable(tmp_path, sim_dir):
    config = replay_config(tmp_path, sim_dir)
    run_scenario(config)
    out = tmp_path / "out"
    (out / "outcomes.ndjson").write_text((sim_dir / "outcomes.ndjson").read_text())
    export_report(out, tmp_path / "r1")
    export_report(out, tmp_path / "r2")
    for name in ("metrics.csv", "confusion.json", "summary.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_export_report_requires_both_logs(tmp_path):
    with pytest.raises(ConfigError):
        export_report(tmp_path, tmp_path / "r")
