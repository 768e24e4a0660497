"""Decision fusion, outcome residual tracking, and the published event type.

The classifier's local probability is blended with weighted outside
opinions (clinician overrides from the console, scripted agents in
headless runs):

    p = alpha * p_local + (1 - alpha) * sum_n w_n p_n

with the opinion weights renormalized to sum to one. alpha weights the
local model output; the default is 0.7. The blend is convex, so the
fused value never leaves the interval spanned by its inputs, and it is
invariant to the order opinions are listed in.

Prediction quality is audited through residuals r = p_arrest - outcome
kept per patient in a trailing window; a residual farther than three
trailing standard deviations from the trailing mean is flagged as an
anomaly, judged against the statistics as they stood before the residual
itself is added.

The unit published to the physician is a PredictionEvent: the risk
prediction plus a twin snapshot reference, the anomaly flag, and the
fusion provenance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .errors import DegenerateInputError, NumericError, ParameterError
from .gateway import TrailingStats
from .net import DEFAULT_THRESHOLD, RiskPrediction

# Trailing-window length for outcome residuals. Sized so the three-sigma
# flag rate on independent gaussian residuals sits within the calibration
# band around the ideal 0.27%; materially shorter windows over-flag.
DEFAULT_RESIDUAL_WINDOW = 1024


@dataclass(frozen=True)
class NeighborOpinion:
    """One outside probability with its relative weight."""

    source_id: str
    p: float
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"opinion probability must be in [0, 1], got {self.p}")
        if not math.isfinite(self.weight) or self.weight < 0.0:
            raise ParameterError(f"opinion weight must be finite and >= 0, got {self.weight}")


@dataclass(frozen=True)
class FusionConfig:
    """Blend policy: alpha for the local model, default weights, threshold.

    `weights` are optional per-source defaults used when opinions arrive
    without explicit weights; they are renormalized to sum to one on
    construction.
    """

    alpha: float = 0.7
    weights: tuple[float, ...] = ()
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.weights:
            if any(w < 0 or not math.isfinite(w) for w in self.weights):
                raise ParameterError(f"weights must be finite and >= 0, got {self.weights}")
            total = sum(self.weights)
            if total <= 0:
                raise DegenerateInputError("default weights sum to zero")
            if abs(total - 1.0) > 1e-9:
                object.__setattr__(
                    self, "weights", tuple(w / total for w in self.weights)
                )


def _as_pairs(others) -> list[tuple[float, float]]:
    pairs = []
    for item in others:
        if isinstance(item, NeighborOpinion):
            pairs.append((item.p, item.weight))
        else:
            p, w = item
            pairs.append((float(p), float(w)))
    return pairs


def fuse_value(p_local: float, others, alpha: float) -> float:
    """Scalar form of the blend; `others` is a sequence of (p, weight).

    Empty `others` is a degenerate input unless alpha is exactly 1 (at
    alpha 1 the outside term has weight zero and the local value passes
    through).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not 0.0 <= p_local <= 1.0:
        raise ParameterError(f"p_local must be in [0, 1], got {p_local}")
    pairs = _as_pairs(others)
    for p, w in pairs:
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"opinion probability must be in [0, 1], got {p}")
        if w < 0 or not math.isfinite(w):
            raise ParameterError(f"opinion weight must be finite and >= 0, got {w}")
    if alpha == 1.0:
        return p_local
    if not pairs:
        raise DegenerateInputError("no outside opinions to average with alpha < 1")
    total_w = sum(w for _, w in pairs)
    if total_w <= 0.0:
        raise DegenerateInputError("all opinion weights are zero, nothing to fuse")
    term = sum(w * p for p, w in pairs) / total_w
    fused = alpha * p_local + (1.0 - alpha) * term
    # Guard against float dust pushing the convex combination out of range.
    return min(max(fused, 0.0), 1.0)


def fuse(local: RiskPrediction, others, config: FusionConfig) -> RiskPrediction:
    """Blend a local prediction with outside opinions; re-threshold.

    Returns a new RiskPrediction with source "fused"; the caller keeps the
    contributing source ids for event provenance.
    """
    fused = fuse_value(local.p_arrest, others, config.alpha)
    return replace(
        local,
        p_arrest=fused,
        decision=bool(fused >= config.threshold),
        source="fused",
    )


# ---------------------------------------------------------------------------
# Outcome residuals and the three-sigma rule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeRecord:
    """Realized cardiac-arrest label for one patient at one instant.

    After reconciliation at most one outcome exists per (patient_id, t_ms);
    a clinician report supersedes the simulator's ground truth.
    """

    patient_id: str
    t_ms: int
    outcome: int
    origin: str  # "simulator" | "clinician"

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ParameterError(f"outcome must be 0 or 1, got {self.outcome!r}")
        if self.origin not in ("simulator", "clinician"):
            raise ParameterError(f"origin must be simulator or clinician, got {self.origin!r}")


@dataclass
class ResidualHistory:
    """Trailing residuals (p_arrest - outcome) for one patient."""

    patient_id: str
    window: int = DEFAULT_RESIDUAL_WINDOW
    stats: TrailingStats = field(init=False)

    def __post_init__(self):
        self.stats = TrailingStats(self.window)

    @property
    def count(self) -> int:
        return self.stats.count

    def mean(self) -> float:
        return self.stats.mean()

    def sigma(self) -> float:
        return self.stats.sigma()


def detect_anomaly(history: ResidualHistory, residual: float) -> tuple[bool, ResidualHistory]:
    """Three-sigma judgment of one residual against its trailing history.

    The flag is computed from the statistics before the residual is
    appended, so a large excursion cannot mask itself; with fewer than two
    prior samples the warm-up returns no-flag. Returns the flag and the
    updated history.
    """
    if not math.isfinite(residual):
        raise NumericError(f"residual must be finite, got {residual}")
    flagged = False
    if history.count >= 2:
        mu = history.stats.mean()
        sigma = history.stats.sigma()
        flagged = abs(residual - mu) > 3.0 * sigma
    history.stats.push(residual)
    return flagged, history


# ---------------------------------------------------------------------------
# Published event
# ---------------------------------------------------------------------------

EVENT_VERSION = 1


@dataclass(frozen=True)
class PredictionEvent:
    """What the physician sees: one prediction with context.

    Per patient, published events carry strictly increasing t_ms.
    """

    prediction: RiskPrediction
    twin_ref: str  # e.g. "/patients/dev0001/twin"
    anomaly: bool
    alpha: float
    sources: tuple[str, ...] = ()

    def to_json(self) -> dict:
        p = self.prediction
        return {
            "v": EVENT_VERSION,
            "patient_id": p.patient_id,
            "t_ms": p.t_ms,
            "p_arrest": p.p_arrest,
            "decision": p.decision,
            "source": p.source,
            "model_version": p.model_version,
            "twin_ref": self.twin_ref,
            "anomaly": self.anomaly,
            "alpha": self.alpha,
            "sources": list(self.sources),
        }


def encode_event(event: PredictionEvent) -> str:
    return json.dumps(event.to_json(), sort_keys=True, separators=(",", ":"))


def decode_event(line: str) -> PredictionEvent:
    doc = json.loads(line)
    pred = RiskPrediction(
        patient_id=doc["patient_id"],
        t_ms=doc["t_ms"],
        p_arrest=doc["p_arrest"],
        decision=doc["decision"],
        source=doc["source"],
        model_version=doc.get("model_version", 0),
    )
    return PredictionEvent(
        prediction=pred,
        twin_ref=doc["twin_ref"],
        anomaly=doc["anomaly"],
        alpha=doc["alpha"],
        sources=tuple(doc.get("sources", ())),
    )
