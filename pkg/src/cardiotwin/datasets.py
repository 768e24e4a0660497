"""Synthetic labeled image sets for training and benchmarking.

The external cohort behind the published figures is not available, so
training sanity runs on generated data shaped like the twin's feature
images. Two families:

- xor_patches: the label is the parity of two half-image signs. No
  linear functional of the pixels can separate it (both classes have the
  same mean), but a small convolutional net solves it from the interior
  edge, which is exactly the kind of structure the classifier should
  find.
- shifted_blobs: a plain mean shift between classes, linearly separable;
  the easy control case.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def xor_patches(
    n: int,
    resolution: int = 24,
    channels: int = 4,
    seed: int = 0,
    amplitude: float = 1.0,
    noise: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Two-class set whose label is the agreement of two half-image signs.

    The left half of every image is shifted by s1 * amplitude and the
    right half by s2 * amplitude with s1, s2 in {-1, +1}; the label is 1
    when the signs agree. Class means coincide, so the set is linearly
    inseparable by construction.
    """
    if n < 1 or resolution < 2 or channels < 1:
        raise ConfigError(f"bad dataset shape n={n}, resolution={resolution}, channels={channels}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A]))
    s1 = rng.integers(0, 2, size=n) * 2 - 1
    s2 = rng.integers(0, 2, size=n) * 2 - 1
    y = (s1 == s2).astype(int)
    x = rng.normal(0.0, noise, size=(n, resolution, resolution, channels))
    half = resolution // 2
    x[:, :, :half, :] += s1[:, None, None, None] * amplitude
    x[:, :, half:, :] += s2[:, None, None, None] * amplitude
    return x, y


def shifted_blobs(
    n: int,
    resolution: int = 24,
    channels: int = 4,
    seed: int = 0,
    separation: float = 0.5,
    noise: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Linearly separable control set: a global mean shift per class."""
    if n < 1 or resolution < 2 or channels < 1:
        raise ConfigError(f"bad dataset shape n={n}, resolution={resolution}, channels={channels}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB10B]))
    y = rng.integers(0, 2, size=n)
    shift = (y * 2 - 1)[:, None, None, None] * separation
    x = rng.normal(0.0, noise, size=(n, resolution, resolution, channels)) + shift
    return x, y.astype(int)


def split(x: np.ndarray, y: np.ndarray, train_frac: float = 0.8, seed: int = 0):
    """Deterministic shuffled split into (x_train, y_train, x_test, y_test)."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must be in (0, 1), got {train_frac}")
    n = len(x)
    order = np.random.default_rng(np.random.SeedSequence([seed, 0x5917])).permutation(n)
    cut = int(round(n * train_frac))
    tr, te = order[:cut], order[cut:]
    return x[tr], y[tr], x[te], y[te]


def linear_probe_accuracy(x: np.ndarray, y: np.ndarray, ridge: float = 1e-3) -> float:
    """Held-out accuracy of a ridge-regularized linear classifier.

    Fit on the first half of the set (flattened pixels against +/-1
    targets via the normal equations), score on the second half. With
    enough pixels a linear readout can memorize its training rows, so
    only the held-out figure says anything about separability.
    """
    flat = x.reshape(len(x), -1)
    design = np.concatenate([flat, np.ones((len(x), 1))], axis=1)
    target = np.asarray(y) * 2.0 - 1.0
    cut = len(x) // 2
    gram = design[:cut].T @ design[:cut]
    gram[np.diag_indices_from(gram)] += ridge
    w = np.linalg.solve(gram, design[:cut].T @ target[:cut])
    pred = (design[cut:] @ w >= 0.0).astype(int)
    return float((pred == np.asarray(y)[cut:]).mean())
