"""Orchestration: wires fleet, gateway, twin, classifier and fusion together.

Three modes share one processing core (CloudState):

- replay: read a recorded raw frame log and push every frame through
  gateway, twin, classifier and fusion strictly in order, single
  threaded. The resulting predictions log is a pure function of (input
  log, params, config), so its content hash is the determinism witness.
- live: simulated devices produce frames concurrently; pipeline stages
  run as threads connected by bounded queues (capacity 1024) and an
  optional HTTP server exposes the console endpoints.
- eval: no streaming at all; train candidate scaling configurations on a
  synthetic set and emit the comparison table.

CloudState also owns the feedback path: clinician overrides join the
next fusion for their patient, outcome reports drive the three-sigma
residual audit, and anomaly-flagged (image, outcome) pairs accumulate
into a queue that fine-tunes the classifier one batch at a time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmark import benchmark
from .datasets import xor_patches
from .errors import (
    CardioTwinError,
    ConfigError,
    UnknownReferenceError,
    ValidationError,
)
from .fusion import (
    DEFAULT_RESIDUAL_WINDOW,
    FusionConfig,
    NeighborOpinion,
    OutcomeRecord,
    PredictionEvent,
    ResidualHistory,
    decode_event,
    detect_anomaly,
    encode_event,
    fuse,
)
from .gateway import DEFAULT_STATS_WINDOW, Gateway, decode_frame, encode_normalized
from .metrics import (
    auc,
    classification_metrics,
    confusion,
    write_confusion_panel,
    write_model_table,
)
from .net import RiskPrediction, ScaledNet, fine_tune
from .scaling import ScalingCoeffs, ScalingConfig, StageSpec
from .telemetry import (
    CHANNELS,
    FleetConfig,
    SensorFrame,
    VitalsGenerator,
    encode_frame,
    run_fleet,
)
from .twin import TwinRegistry, rasterize

log = logging.getLogger("cardiotwin.pipeline")

QUEUE_CAPACITY = 1024

# Feature images retained per patient so later outcome feedback can still
# find the image its prediction was made from.
RETAINED_IMAGES = 64

FINE_TUNE_BATCH = 16


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run needs; a JSON document on disk, flags override."""

    mode: str = "replay"
    fleet: FleetConfig = field(default_factory=lambda: FleetConfig(device_count=2, horizon_ticks=50))
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    out_dir: str = "run_out"
    raw_in: str | None = None
    outcomes_in: str | None = None
    params_in: str | None = None
    seed: int = 0
    stats_window: int = DEFAULT_STATS_WINDOW
    residual_window: int = DEFAULT_RESIDUAL_WINDOW
    fine_tune_batch: int = FINE_TUNE_BATCH
    fine_tune_lr: float = 0.05
    agent_rate: float = 0.0
    agent_weight: float = 0.5
    serve: str | None = None
    static_dir: str | None = None
    # Demo hook: pin the local model probability to a constant so fusion
    # arithmetic can be checked end to end against hand-computed values.
    fixed_p_local: float | None = None
    eval_phis: tuple[float, ...] = (0.0, 1.0)
    eval_samples: int = 600
    eval_epochs: int = 8

    def __post_init__(self):
        if self.mode not in ("live", "replay", "eval"):
            raise ConfigError(f"mode must be live, replay or eval, got {self.mode!r}")
        if not 0.0 <= self.agent_rate <= 1.0:
            raise ConfigError(f"agent_rate must be in [0, 1], got {self.agent_rate}")
        if self.fine_tune_batch < 1:
            raise ConfigError(f"fine_tune_batch must be >= 1, got {self.fine_tune_batch}")

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioConfig":
        fleet_doc = doc.get("fleet", {})
        fleet = FleetConfig(
            device_count=int(fleet_doc.get("devices", 2)),
            horizon_ticks=int(fleet_doc.get("ticks", 50)),
            tick_ms=int(fleet_doc.get("tick_ms", 1000)),
            seed=int(doc.get("seed", fleet_doc.get("seed", 0))),
            drop_rate=float(fleet_doc.get("drop_rate", 0.0)),
            neighbor_map={k: tuple(v) for k, v in fleet_doc.get("neighbor_map", {}).items()},
        )
        sc = doc.get("scaling", {})
        scaling = ScalingConfig(
            phi=float(sc.get("phi", 0.0)),
            coeffs=ScalingCoeffs(
                float(sc.get("alpha", 1.2)), float(sc.get("beta", 1.1)), float(sc.get("gamma", 1.15))
            ),
            base_resolution=int(sc.get("base_resolution", 24)),
            stages=tuple(
                StageSpec(int(k), int(w), int(r)) for k, w, r in sc.get("stages", [[3, 16, 3], [3, 32, 3]])
            ),
        )
        fu = doc.get("fusion", {})
        fusion_cfg = FusionConfig(
            alpha=float(fu.get("alpha", 0.7)),
            threshold=float(fu.get("threshold", 0.5)),
        )
        return cls(
            mode=doc.get("mode", "replay"),
            fleet=fleet,
            scaling=scaling,
            fusion=fusion_cfg,
            out_dir=doc.get("out_dir", "run_out"),
            raw_in=doc.get("raw_in"),
            outcomes_in=doc.get("outcomes_in"),
            params_in=doc.get("params_in"),
            seed=int(doc.get("seed", 0)),
            stats_window=int(doc.get("stats_window", DEFAULT_STATS_WINDOW)),
            residual_window=int(doc.get("residual_window", DEFAULT_RESIDUAL_WINDOW)),
            fine_tune_batch=int(doc.get("fine_tune_batch", FINE_TUNE_BATCH)),
            fine_tune_lr=float(doc.get("fine_tune_lr", 0.05)),
            agent_rate=float(doc.get("agent_rate", 0.0)),
            agent_weight=float(doc.get("agent_weight", 0.5)),
            serve=doc.get("serve"),
            static_dir=doc.get("static_dir"),
            fixed_p_local=doc.get("fixed_p_local"),
            eval_phis=tuple(float(p) for p in doc.get("eval_phis", (0.0, 1.0))),
            eval_samples=int(doc.get("eval_samples", 600)),
            eval_epochs=int(doc.get("eval_epochs", 8)),
        )

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_json(doc)


class ScriptedAgent:
    """Deterministic stand-in for outside opinions in headless runs.

    After each published event it may (per its seeded stream) produce an
    override near the published probability; replay stays deterministic
    because draws happen in event order.
    """

    def __init__(self, seed: int, rate: float, weight: float):
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA9E7]))
        self.rate = rate
        self.weight = weight

    def maybe_opinion(self, event: PredictionEvent) -> NeighborOpinion | None:
        roll = self.rng.random()
        jitter = (self.rng.random() - 0.5) * 0.3
        if roll >= self.rate:
            return None
        p = min(max(event.prediction.p_arrest + jitter, 0.0), 1.0)
        return NeighborOpinion(source_id="agent", p=p, weight=self.weight)


class CloudState:
    """Server-side state: the whole processing core behind the endpoints.

    All mutation happens under one lock; replay uses it single threaded,
    live mode shares it between the processing worker and the HTTP
    handlers.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.lock = threading.RLock()
        self.gateway = Gateway(config.stats_window)
        arch = config.scaling.resolve()
        self.resolution = arch.resolution
        self.registry = TwinRegistry(
            trace_len=arch.resolution,
            default_dt_s=config.fleet.tick_ms / 1000.0,
        )
        if config.params_in:
            self.net = ScaledNet.load(config.params_in)
            if self.net.arch.resolution != arch.resolution:
                raise ConfigError(
                    f"loaded params expect resolution {self.net.arch.resolution}, "
                    f"config resolves to {arch.resolution}"
                )
        else:
            self.net = ScaledNet(config.scaling, seed=config.seed)
        self.fusion_config = config.fusion
        self.overrides: dict[str, list[NeighborOpinion]] = {}
        self.residuals: dict[str, ResidualHistory] = {}
        self.outcomes: dict[tuple[str, int], OutcomeRecord] = {}
        self.published_p: dict[tuple[str, int], float] = {}
        self.last_event: dict[str, PredictionEvent] = {}
        self.images: dict[str, deque] = {}
        self.pending_anomaly: set[str] = set()
        self.ft_queue: list[tuple[np.ndarray, int]] = []
        self.model_version = 0
        self.state_version = 0
        self.accepted_by_patient: dict[str, int] = {}
        self.predictions_by_patient: dict[str, int] = {}
        self.unmatched_feedback = 0
        # Optional hook: called with every accepted NormalizedFrame, used by
        # replay to mirror the normalized log without a second gateway pass.
        self.normalized_sink = None
        self.agent = (
            ScriptedAgent(config.seed, config.agent_rate, config.agent_weight)
            if config.agent_rate > 0
            else None
        )

    # -- streaming ---------------------------------------------------------

    def process_frames(self, frames: list[SensorFrame]) -> list[PredictionEvent]:
        """Push frames (usually one tick's worth) through the whole core.

        Frames of one call are classified as a single batch; duplicates are
        dropped at the gateway and produce no event.
        """
        with self.lock:
            staged = []
            for frame in frames:
                nf = self.gateway.ingest(frame)
                if nf is None:
                    continue
                if self.normalized_sink is not None:
                    self.normalized_sink(nf)
                self.accepted_by_patient[nf.device_id] = (
                    self.accepted_by_patient.get(nf.device_id, 0) + 1
                )
                state = self.registry.step(nf)
                staged.append((nf, rasterize(state)))
            if not staged:
                return []
            batch = np.stack([img.tensor for _, img in staged])
            p_arrest = self.net.predict_proba(batch)[:, 1]
            if self.config.fixed_p_local is not None:
                p_arrest = np.full(len(staged), self.config.fixed_p_local)
            events = []
            for (nf, img), p_local in zip(staged, p_arrest):
                events.append(self._publish(nf.device_id, nf.t_ms, float(p_local), img.tensor))
            return events

    def _publish(self, patient_id: str, t_ms: int, p_local: float, tensor) -> PredictionEvent:
        threshold = self.fusion_config.threshold
        local = RiskPrediction(
            patient_id=patient_id,
            t_ms=t_ms,
            p_arrest=p_local,
            decision=bool(p_local >= threshold),
            source="model",
            model_version=self.model_version,
        )
        opinions = self.overrides.pop(patient_id, [])
        if opinions:
            prediction = fuse(local, opinions, self.fusion_config)
            sources = tuple(o.source_id for o in opinions)
        else:
            prediction = local
            sources = ()

        last = self.last_event.get(patient_id)
        if last is not None and t_ms <= last.prediction.t_ms:
            raise ValidationError(
                f"event for {patient_id} at t_ms={t_ms} not after {last.prediction.t_ms}"
            )
        event = PredictionEvent(
            prediction=prediction,
            twin_ref=f"/patients/{patient_id}/twin",
            anomaly=patient_id in self.pending_anomaly,
            alpha=self.fusion_config.alpha,
            sources=sources,
        )
        self.pending_anomaly.discard(patient_id)
        self.last_event[patient_id] = event
        self.published_p[(patient_id, t_ms)] = prediction.p_arrest
        self.predictions_by_patient[patient_id] = (
            self.predictions_by_patient.get(patient_id, 0) + 1
        )
        ring = self.images.setdefault(patient_id, deque(maxlen=RETAINED_IMAGES))
        ring.append((t_ms, tensor))
        if self.agent is not None:
            opinion = self.agent.maybe_opinion(event)
            if opinion is not None:
                self.overrides.setdefault(patient_id, []).append(opinion)
        return event

    # -- feedback ----------------------------------------------------------

    def apply_feedback(self, doc: dict) -> dict:
        """Handle one console/agent feedback document.

        Outcome reports must reference a published prediction; they update
        the outcome ledger, drive the residual audit, and may queue a
        fine-tune pair. Overrides are held for the patient's next fusion.
        """
        patient_id = doc.get("patient_id")
        if not isinstance(patient_id, str) or not patient_id:
            raise ValidationError("feedback needs a patient_id string")
        with self.lock:
            if patient_id not in self.registry:
                raise UnknownReferenceError(f"unknown patient {patient_id!r}")
            has_outcome = "outcome" in doc
            has_override = "override_p" in doc
            if has_outcome == has_override:
                raise ValidationError("feedback carries exactly one of outcome or override_p")

            if has_override:
                p = float(doc["override_p"])
                weight = float(doc.get("weight", 1.0))
                opinion = NeighborOpinion(source_id="clinician", p=p, weight=weight)
                self.overrides.setdefault(patient_id, []).append(opinion)
                self.state_version += 1
                return {
                    "status": "accepted",
                    "kind": "override",
                    "pending": len(self.overrides[patient_id]),
                    "state_version": self.state_version,
                }

            t_ms = doc.get("t_ms")
            if not isinstance(t_ms, int) or isinstance(t_ms, bool):
                raise ValidationError("outcome feedback needs an integer t_ms")
            key = (patient_id, t_ms)
            if key not in self.published_p:
                raise UnknownReferenceError(
                    f"no published prediction for {patient_id!r} at t_ms={t_ms}"
                )
            outcome = doc["outcome"]
            if outcome not in (0, 1):
                raise ValidationError(f"outcome must be 0 or 1, got {outcome!r}")
            record = OutcomeRecord(patient_id, t_ms, int(outcome), "clinician")
            existing = self.outcomes.get(key)
            if existing is None or existing.origin == "simulator":
                self.outcomes[key] = record

            residual = self.published_p[key] - record.outcome
            history = self.residuals.setdefault(
                patient_id, ResidualHistory(patient_id, self.config.residual_window)
            )
            flagged, _ = detect_anomaly(history, residual)
            queued = False
            if flagged:
                self.pending_anomaly.add(patient_id)
                tensor = self._retained_image(patient_id, t_ms)
                if tensor is not None:
                    self.ft_queue.append((tensor, record.outcome))
                    queued = True
                else:
                    self.unmatched_feedback += 1
            tuned = self._maybe_fine_tune()
            self.state_version += 1
            return {
                "status": "accepted",
                "kind": "outcome",
                "anomaly": flagged,
                "queued": queued,
                "fine_tuned": tuned,
                "model_version": self.model_version,
                "state_version": self.state_version,
            }

    def _retained_image(self, patient_id: str, t_ms: int):
        for stamp, tensor in self.images.get(patient_id, ()):
            if stamp == t_ms:
                return tensor
        return None

    def _maybe_fine_tune(self) -> bool:
        if len(self.ft_queue) < self.config.fine_tune_batch:
            return False
        batch, self.ft_queue = self.ft_queue, []
        loss = fine_tune(self.net, batch, self.config.fine_tune_lr)
        self.model_version += 1
        log.info("fine-tune step on %d pairs, loss %.4f, model_version %d",
                 len(batch), loss, self.model_version)
        return True

    # -- console views -----------------------------------------------------

    def patients_snapshot(self) -> list[dict]:
        with self.lock:
            out = []
            for pid in self.registry.ids():
                event = self.last_event.get(pid)
                entry = {
                    "patient_id": pid,
                    "twin_ref": f"/patients/{pid}/twin",
                    "updates": self.registry.get(pid).updates,
                }
                if event is not None:
                    entry.update(
                        t_ms=event.prediction.t_ms,
                        p_arrest=event.prediction.p_arrest,
                        decision=event.prediction.decision,
                        anomaly=event.anomaly,
                        source=event.prediction.source,
                        model_version=event.prediction.model_version,
                    )
                out.append(entry)
            return out

    def twin_snapshot(self, patient_id: str) -> dict:
        with self.lock:
            if patient_id not in self.registry:
                raise UnknownReferenceError(f"unknown patient {patient_id!r}")
            return self.registry.get(patient_id).to_json()

    def conservation(self) -> dict:
        """Per-run accounting: accepted frames vs twin steps vs predictions."""
        with self.lock:
            twin_updates = {pid: self.registry.get(pid).updates for pid in self.registry.ids()}
            return {
                "accepted": dict(self.accepted_by_patient),
                "twin_updates": twin_updates,
                "predictions": dict(self.predictions_by_patient),
                "balanced": self.accepted_by_patient == twin_updates == self.predictions_by_patient,
            }


# ---------------------------------------------------------------------------
# Scenario running
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExitReport:
    mode: str
    counts: dict
    log_paths: dict
    predictions_hash: str | None
    elapsed_s: float

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "counts": self.counts,
            "log_paths": self.log_paths,
            "predictions_hash": self.predictions_hash,
            "elapsed_s": self.elapsed_s,
        }


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _annotate(stage: str, record_id: str, exc: CardioTwinError) -> CardioTwinError:
    return type(exc)(f"[{stage}] {record_id}: {exc}")


def run_scenario(config: ScenarioConfig) -> ExitReport:
    t0 = time.perf_counter()
    if config.mode == "replay":
        report = _run_replay(config)
    elif config.mode == "live":
        report = _run_live(config)
    else:
        report = _run_eval(config)
    elapsed = time.perf_counter() - t0
    final = ExitReport(report.mode, report.counts, report.log_paths,
                       report.predictions_hash, elapsed)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "exit_report.json", "w", encoding="utf-8") as fh:
        json.dump(final.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return final


def simulate_to_dir(fleet: FleetConfig, out_dir) -> dict:
    """Run the fleet and write raw.ndjson, outcomes.ndjson, delivery counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    flog = run_fleet(fleet)
    raw_path = out / "raw.ndjson"
    with open(raw_path, "w", encoding="utf-8") as fh:
        for frame in flog.frames:
            fh.write(encode_frame(frame))
            fh.write("\n")
    outcomes_path = out / "outcomes.ndjson"
    with open(outcomes_path, "w", encoding="utf-8") as fh:
        for rec in flog.outcomes:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    counts = {
        "generated": flog.generated,
        "delivered": flog.delivered,
        "dropped": flog.dropped,
        "duplicated": sum(1 for r in flog.records if r.status == "duplicated"),
        "delivery_records": len(flog.records),
        "conserved": flog.generated == flog.delivered + flog.dropped,
    }
    with open(out / "sim_summary.json", "w", encoding="utf-8") as fh:
        json.dump(counts, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"raw": str(raw_path), "outcomes": str(outcomes_path), "counts": counts}


def _load_outcomes(path) -> list[OutcomeRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            records.append(
                OutcomeRecord(doc["patient_id"], doc["t_ms"], doc["outcome"], doc["origin"])
            )
    return records


def _run_replay(config: ScenarioConfig) -> ExitReport:
    if not config.raw_in:
        raise ConfigError("replay mode needs raw_in pointing at a recorded frame log")
    raw_path = Path(config.raw_in)
    if not raw_path.exists():
        raise ConfigError(f"replay input {raw_path} does not exist")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    state = CloudState(config)
    if config.outcomes_in:
        for rec in _load_outcomes(config.outcomes_in):
            state.outcomes.setdefault((rec.patient_id, rec.t_ms), rec)

    norm_path = out_dir / "normalized.ndjson"
    pred_path = out_dir / "predictions.ndjson"
    read = 0
    events_written = 0
    with open(norm_path, "w", encoding="utf-8") as norm_fh, \
            open(pred_path, "w", encoding="utf-8") as pred_fh:
        state.normalized_sink = lambda nf: norm_fh.write(encode_normalized(nf) + "\n")
        pending: list[SensorFrame] = []
        pending_t: int | None = None

        def flush_batch():
            nonlocal events_written
            if not pending:
                return
            for event in state.process_frames(pending):
                pred_fh.write(encode_event(event))
                pred_fh.write("\n")
                events_written += 1
            pending.clear()

        with open(raw_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                read += 1
                try:
                    frame = decode_frame(line)
                except CardioTwinError as exc:
                    raise _annotate("gateway", f"{raw_path}:{lineno}", exc) from exc
                if pending_t is not None and frame.t_ms != pending_t:
                    flush_batch()
                pending_t = frame.t_ms
                pending.append(frame)
            flush_batch()
        state.normalized_sink = None

    counts = {
        "frames_read": read,
        "accepted": state.gateway.accepted,
        "duplicates": state.gateway.duplicates,
        "predictions": events_written,
        "model_version": state.model_version,
        "conservation": state.conservation()["balanced"],
    }
    log_paths = {
        "raw": str(raw_path),
        "normalized": str(norm_path),
        "predictions": str(pred_path),
    }
    if config.outcomes_in:
        log_paths["outcomes"] = str(config.outcomes_in)
    return ExitReport("replay", counts, log_paths, file_sha256(pred_path), 0.0)


_SENTINEL = None


def _run_live(config: ScenarioConfig) -> ExitReport:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = CloudState(config)

    frame_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    event_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    errors: list[BaseException] = []

    fleet = config.fleet
    tick_s = fleet.tick_ms / 1000.0
    stop = threading.Event()
    produced: dict[str, int] = {}

    def producer(device_id: str):
        profile = fleet.profile_for(device_id)
        gen = VitalsGenerator(device_id, profile, fleet.seed, fleet.tick_ms)
        series = gen.series(fleet.horizon_ticks)
        for tick in range(fleet.horizon_ticks):
            if stop.is_set():
                return
            produced[device_id] = tick + 1
            row = series[tick]
            frame = SensorFrame(
                device_id=device_id,
                seq=tick + 1,
                t_ms=(tick + 1) * fleet.tick_ms,
                channels={name: float(row[k]) for k, name in enumerate(CHANNELS)},
                context={"location": profile.location,
                         "activity": "active" if row[4] > 0.5 else "rest"},
            )
            frame_q.put(frame)
            stop.wait(tick_s)

    def processor():
        try:
            while True:
                frame = frame_q.get()
                if frame is _SENTINEL:
                    frame_q.task_done()
                    break
                try:
                    for event in state.process_frames([frame]):
                        event_q.put(event)
                finally:
                    frame_q.task_done()
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    pred_path = out_dir / "predictions.ndjson"
    writer_done = threading.Event()
    broadcaster = None
    server = None
    if config.serve:
        from .server import Broadcaster, ConsoleServer

        broadcaster = Broadcaster()
        server = ConsoleServer(config.serve, state, broadcaster, static_dir=config.static_dir)
        server.start()
        # Announce the bound endpoint; with port 0 this is the only way
        # for a caller to learn where the server actually landed.
        print(f"serving on {server.address}", flush=True)

    def writer():
        try:
            with open(pred_path, "w", encoding="utf-8") as fh:
                while True:
                    event = event_q.get()
                    if event is _SENTINEL:
                        event_q.task_done()
                        break
                    fh.write(encode_event(event))
                    fh.write("\n")
                    fh.flush()
                    if broadcaster is not None:
                        broadcaster.publish(encode_event(event))
                    event_q.task_done()
        except BaseException as exc:
            errors.append(exc)
        finally:
            writer_done.set()

    threads = [threading.Thread(target=processor, name="processor", daemon=True),
               threading.Thread(target=writer, name="writer", daemon=True)]
    producers = [
        threading.Thread(target=producer, args=(device_id,), name=f"dev-{device_id}", daemon=True)
        for device_id in fleet.device_ids()
    ]
    for t in threads + producers:
        t.start()
    try:
        for t in producers:
            t.join()
    except KeyboardInterrupt:
        log.info("interrupted, draining in-flight frames")
        stop.set()
        for t in producers:
            t.join()
    # Drain: everything produced must be processed and written before exit.
    frame_q.put(_SENTINEL)
    threads[0].join()
    event_q.put(_SENTINEL)
    threads[1].join()
    writer_done.wait()
    if server is not None:
        server.stop()
    if errors:
        raise errors[0]

    counts = {
        "frames_generated": sum(produced.values()),
        "accepted": state.gateway.accepted,
        "duplicates": state.gateway.duplicates,
        "predictions": sum(state.predictions_by_patient.values()),
        "model_version": state.model_version,
        "conservation": state.conservation()["balanced"],
    }
    pred_hash = file_sha256(pred_path) if pred_path.exists() else None
    return ExitReport("live", counts, {"predictions": str(pred_path)}, pred_hash, 0.0)


def _run_eval(config: ScenarioConfig) -> ExitReport:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = config.scaling
    reports = []
    panels = {}
    for phi in config.eval_phis:
        cfg = ScalingConfig(
            phi=phi,
            coeffs=base.coeffs,
            base_resolution=base.base_resolution,
            stages=base.stages,
            in_channels=base.in_channels,
            n_classes=base.n_classes,
        )
        r = cfg.resolve().resolution
        x, y = xor_patches(config.eval_samples, resolution=r, channels=cfg.in_channels,
                           seed=config.seed)
        result = benchmark([cfg], (x, y), train_budget=config.eval_epochs,
                           seed=config.seed)
        reports.extend(result.reports)
        panels.update(result.panels)
    csv_path = out_dir / "metrics.csv"
    write_model_table(csv_path, reports)
    panel_path = out_dir / "confusion.json"
    write_confusion_panel(panel_path, panels)
    counts = {"configs": len(config.eval_phis), "rows": len(reports)}
    return ExitReport("eval", counts, {"metrics": str(csv_path), "confusion": str(panel_path)},
                      None, 0.0)


# ---------------------------------------------------------------------------
# Report export
# ---------------------------------------------------------------------------


def export_report(in_dir, out_dir, plots: bool = False) -> dict:
    """Join predictions with outcomes and write the evaluation bundle.

    Reads predictions.ndjson and outcomes.ndjson from in_dir; writes
    metrics.csv, confusion.json and summary.json to out_dir. Predictions
    without a matching outcome are excluded and counted. Output is
    byte-stable for fixed inputs.
    """
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    pred_path = in_dir / "predictions.ndjson"
    outcome_path = in_dir / "outcomes.ndjson"
    if not pred_path.exists() or not outcome_path.exists():
        raise ConfigError(f"{in_dir} must hold predictions.ndjson and outcomes.ndjson")
    out_dir.mkdir(parents=True, exist_ok=True)

    outcomes = {(r.patient_id, r.t_ms): r.outcome for r in _load_outcomes(outcome_path)}
    scores, decisions, labels = [], [], []
    excluded = 0
    total = 0
    with open(pred_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            total += 1
            event = decode_event(line)
            key = (event.prediction.patient_id, event.prediction.t_ms)
            if key not in outcomes:
                excluded += 1
                continue
            scores.append(event.prediction.p_arrest)
            decisions.append(int(event.prediction.decision))
            labels.append(outcomes[key])

    summary = {
        "predictions": total,
        "outcomes": len(outcomes),
        "joined": len(labels),
        "excluded_no_outcome": excluded,
        "predictions_sha256": file_sha256(pred_path),
    }
    panels = {}
    report_rows = []
    if labels:
        matrix = confusion(decisions, labels)
        panels["pipeline"] = matrix
        row = classification_metrics(matrix, model_name="pipeline")
        auc_value = None
        if len(set(labels)) == 2:
            auc_value = auc(scores, labels)
        report_rows.append(dataclasses.replace(row, auc=auc_value, training_time_s=None))
        summary["accuracy"] = row.accuracy
    csv_path = out_dir / "metrics.csv"
    write_model_table(csv_path, report_rows)
    panel_path = out_dir / "confusion.json"
    write_confusion_panel(panel_path, panels)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if plots:
        _maybe_plot(report_rows, out_dir)
    summary["paths"] = {
        "metrics": str(csv_path),
        "confusion": str(panel_path),
        "summary": str(out_dir / "summary.json"),
    }
    return summary


def _maybe_plot(rows, out_dir: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed, skipping plots")
        return
    if not rows:
        return
    row = rows[0]
    names, values = [], []
    for name in ("accuracy", "precision", "recall", "f1", "specificity", "auc"):
        value = getattr(row, name)
        if value is not None:
            names.append(name)
            values.append(value)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(names, values)
    ax.set_ylim(0, 1)
    ax.set_title("pipeline metrics")
    fig.tight_layout()
    fig.savefig(out_dir / "metrics.png", dpi=120)
    plt.close(fig)
