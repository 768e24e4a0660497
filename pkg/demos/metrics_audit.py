"""
Auditing the evaluation arithmetic
==================================

Two checks a reviewer can re-run in seconds. First, each reference row
must agree with itself: F1 recomputed from the row's own precision and
recall has to land on the printed F1. Second, trapezoidal area under
the ROC must equal the probability that a random positive outscores a
random negative (ties at half credit), which this script recounts pair
by pair.
"""

import numpy as np

from cardiotwin.benchmark import REFERENCE_ROWS
from cardiotwin.metrics import auc, confusion, classification_metrics, f1_from_pr

print(f"{'model':<14} {'printed F1':>10} {'recomputed':>11} {'gap':>9}")
for row in REFERENCE_ROWS:
    again = f1_from_pr(row.precision, row.recall)
    print(f"{row.model_name:<14} {row.f1:10.4f} {again:11.6f} {abs(again - row.f1):9.1e}")

# A noisy scorer on 400 labeled samples. Scores are snapped to a coarse
# grid so ties actually show up in the pair count.
rng = np.random.default_rng(17)
labels = rng.integers(0, 2, size=400)
scores = np.round((labels * 0.5 + rng.normal(0, 0.45, size=400)) * 8) / 8

area = auc(scores, labels)
pos = scores[labels == 1]
neg = scores[labels == 0]
wins = sum(float(np.sum(s > neg)) + 0.5 * float(np.sum(s == neg)) for s in pos)
pairwise = wins / (len(pos) * len(neg))
print(f"\ntrapezoid AUC {area:.6f}  pairwise recount {pairwise:.6f}  "
      f"gap {abs(area - pairwise):.1e}")

matrix = confusion((scores >= 0.25).astype(int), labels)
report = classification_metrics(matrix, model_name="noisy-scorer")
print(f"\nconfusion at threshold 0.25: tp={matrix.tp} fp={matrix.fp} "
      f"tn={matrix.tn} fn={matrix.fn}")
print(f"accuracy {report.accuracy:.4f}  precision {report.precision:.4f}  "
      f"recall {report.recall:.4f}  F1 {report.f1:.4f}")
