"""Benchmark harness and the published reference comparison.

Two jobs live here. First, the reference table: the accuracy, precision,
recall, F1, specificity, AUC and training-time figures reported for the
three backbone architectures on the original (external) cohort. Those
absolute numbers are not reproducible at desk scale; they serve as
report-format fixtures and as input to the F1 consistency audit.

Second, the harness: train each candidate scaling configuration from
scratch on a fixed 80/20 split of a synthetic labeled image set, time
it, and score the held-out fraction with the full metric suite. The
output is a table with exactly the reference columns plus a per-model
confusion-matrix panel.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .metrics import (
    ConfusionMatrix,
    ConsistencyReport,
    MetricsReport,
    auc,
    classification_metrics,
    confusion,
    f1_consistency,
)
from .net import ScaledNet, accuracy, fit
from .scaling import ScalingConfig

REFERENCE_ROWS: tuple[MetricsReport, ...] = (
    MetricsReport("EfficientNet", 0.9345, 0.925, 0.9482, 0.9365, 0.9203, 0.9630, 275.24),
    MetricsReport("ResNet50", 0.9126, 0.9077, 0.9192, 0.9134, 0.906, 0.9487, 320.40),
    MetricsReport("VGG16", 0.8915, 0.8903, 0.8933, 0.8918, 0.8896, 0.9339, 435.24),
)


def reference_consistency() -> ConsistencyReport:
    """Audit the reference rows: does each reported F1 match its own P/R?"""
    return f1_consistency(
        (row.precision, row.recall, row.f1) for row in REFERENCE_ROWS
    )


@dataclass(frozen=True)
class BenchmarkResult:
    reports: tuple[MetricsReport, ...]
    panels: dict[str, ConfusionMatrix]


def benchmark(
    configs: list[ScalingConfig],
    dataset: tuple[np.ndarray, np.ndarray],
    train_budget: int = 15,
    lr: float = 0.2,
    batch_size: int = 32,
    seed: int = 0,
    names: list[str] | None = None,
) -> BenchmarkResult:
    """Train and score each config on a fixed 80/20 split of the dataset.

    `train_budget` is the number of SGD epochs. Metric rows are
    deterministic in (configs, dataset, seed) apart from the measured
    wall-clock training time.
    """
    x, y = dataset
    y = np.asarray(y)
    if set(np.unique(y)) != {0, 1}:
        raise ValidationError("dataset must contain both classes")
    n = len(x)
    order = np.random.default_rng(np.random.SeedSequence([seed, 0xBE9C])).permutation(n)
    cut = int(round(n * 0.8))
    tr, te = order[:cut], order[cut:]
    for part, label in ((tr, "train"), (te, "test")):
        if len(set(y[part].tolist())) < 2:
            raise ValidationError(f"{label} split lost a class; enlarge the dataset")

    reports = []
    panels: dict[str, ConfusionMatrix] = {}
    for i, config in enumerate(configs):
        name = names[i] if names else f"scaled-cnn-phi{config.phi:g}"
        net = ScaledNet(config, seed=seed)
        t0 = time.perf_counter()
        fit(net, x[tr], y[tr], epochs=train_budget, lr=lr, batch_size=batch_size, seed=seed)
        elapsed = time.perf_counter() - t0
        scores = net.predict_proba(x[te])[:, 1]
        preds = (scores >= 0.5).astype(int)
        matrix = confusion(preds, y[te])
        report = classification_metrics(matrix, model_name=name)
        reports.append(
            MetricsReport(
                model_name=name,
                accuracy=report.accuracy,
                precision=report.precision,
                recall=report.recall,
                f1=report.f1,
                specificity=report.specificity,
                auc=auc(scores, y[te]),
                training_time_s=elapsed,
            )
        )
        panels[name] = matrix
    return BenchmarkResult(tuple(reports), panels)


def quick_eval(net: ScaledNet, x: np.ndarray, y: np.ndarray) -> float:
    """Held-out accuracy of an already-trained net; convenience wrapper."""
    return accuracy(net, x, y)
