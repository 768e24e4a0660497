"""Compact convolutional classifier, implemented directly on numpy.

The network is the resolved product of a scaling config: a strided 3x3
stem, a stack of depthwise-separable blocks (depthwise conv, pointwise
conv, each followed by a smooth SiLU activation), global average pooling
and a linear head. Everything runs in float64, NHWC layout, with full
backpropagation, so gradients can be verified against central finite
differences to tight tolerance.

Besides training and inference the module provides two bookkeeping
routes that outside checks compare against each other: a recount of
multiply-accumulates and parameters from the actual tensors (the
analytic counterpart lives in the scaling module), and a small binary
format for weights that round-trips together with the scaling config.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, NumericError, ParameterError, ShapeError, VersionError
from .scaling import ResolvedArch, ScalingConfig, count_macs, count_params

PARAMS_MAGIC = b"CTNN"
PARAMS_VERSION = 1

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class RiskPrediction:
    """The classifier's verdict for one patient at one instant."""

    patient_id: str
    t_ms: int
    p_arrest: float
    decision: bool
    source: str  # "model" | "fused"
    model_version: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_arrest <= 1.0:
            raise ParameterError(f"p_arrest must be in [0, 1], got {self.p_arrest}")
        if self.source not in ("model", "fused"):
            raise ParameterError(f"source must be 'model' or 'fused', got {self.source!r}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def dsilu(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# im2col plumbing (NHWC, 'same' padding)
# ---------------------------------------------------------------------------


def im2col(x: np.ndarray, k: int, stride: int):
    """Unfold k-by-k patches into rows of a (n*oh*ow, k*k*c) matrix."""
    n, h, w, c = x.shape
    oh = -(-h // stride)
    ow = -(-w // stride)
    pad_h = max((oh - 1) * stride + k - h, 0)
    pad_w = max((ow - 1) * stride + k - w, 0)
    pt, pl = pad_h // 2, pad_w // 2
    xp = np.pad(x, ((0, 0), (pt, pad_h - pt), (pl, pad_w - pl), (0, 0)))
    cols = np.empty((n, oh, ow, k, k, c), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :]
    return cols.reshape(n * oh * ow, k * k * c), (n, oh, ow, xp.shape, (pt, pl))


def col2im(dcols: np.ndarray, k: int, stride: int, meta, in_shape):
    """Scatter-add inverse of im2col; returns the gradient w.r.t. the input."""
    n, oh, ow, xpshape, (pt, pl) = meta
    dxp = np.zeros(xpshape, dtype=dcols.dtype)
    dcols = dcols.reshape(n, oh, ow, k, k, xpshape[3])
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += dcols[
                :, :, :, i, j, :
            ]
    h, w = in_shape[1], in_shape[2]
    return dxp[:, pt : pt + h, pl : pl + w, :]


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Conv:
    """Dense convolution via im2col; weight shape (k*k*cin, cout)."""

    def __init__(self, k: int, cin: int, cout: int, stride: int, rng: np.random.Generator):
        fan_in = k * k * cin
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, cout))
        self.b = np.zeros(cout)
        self.k = k
        self.stride = stride
        self.cin = cin
        self.dw = None
        self.db = None

    def forward(self, x):
        cols, meta = im2col(x, self.k, self.stride)
        self._cache = (cols, meta, x.shape)
        n, oh, ow = meta[0], meta[1], meta[2]
        return (cols @ self.w + self.b).reshape(n, oh, ow, -1)

    def backward(self, dout):
        cols, meta, xshape = self._cache
        d2 = dout.reshape(-1, dout.shape[-1])
        self.dw = cols.T @ d2
        self.db = d2.sum(axis=0)
        return col2im(d2 @ self.w.T, self.k, self.stride, meta, xshape)

    def out_hw(self, h, w):
        return -(-h // self.stride), -(-w // self.stride)

    def mac_count(self, h, w):
        oh, ow = self.out_hw(h, w)
        return oh * ow * self.w.shape[0] * self.w.shape[1]


class DepthwiseConv:
    """Per-channel convolution; weight shape (k, k, channels)."""

    def __init__(self, k: int, channels: int, stride: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, np.sqrt(2.0 / (k * k)), size=(k, k, channels))
        self.b = np.zeros(channels)
        self.k = k
        self.stride = stride
        self.dw = None
        self.db = None

    def forward(self, x):
        k, s = self.k, self.stride
        n, h, w, c = x.shape
        oh, ow = -(-h // s), -(-w // s)
        pad_h = max((oh - 1) * s + k - h, 0)
        pad_w = max((ow - 1) * s + k - w, 0)
        pt, pl = pad_h // 2, pad_w // 2
        xp = np.pad(x, ((0, 0), (pt, pad_h - pt), (pl, pad_w - pl), (0, 0)))
        out = np.zeros((n, oh, ow, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += xp[:, i : i + oh * s : s, j : j + ow * s : s, :] * self.w[i, j]
        self._cache = (xp, x.shape, (pt, pl), (oh, ow))
        return out + self.b

    def backward(self, dout):
        k, s = self.k, self.stride
        xp, xshape, (pt, pl), (oh, ow) = self._cache
        self.dw = np.zeros_like(self.w)
        self.db = dout.sum(axis=(0, 1, 2))
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                sl = np.s_[:, i : i + oh * s : s, j : j + ow * s : s, :]
                self.dw[i, j] = (xp[sl] * dout).sum(axis=(0, 1, 2))
                dxp[sl] += dout * self.w[i, j]
        h, w = xshape[1], xshape[2]
        return dxp[:, pt : pt + h, pl : pl + w, :]

    def out_hw(self, h, w):
        return -(-h // self.stride), -(-w // self.stride)

    def mac_count(self, h, w):
        oh, ow = self.out_hw(h, w)
        return oh * ow * self.w.shape[0] * self.w.shape[1] * self.w.shape[2]


class SiLU:
    def forward(self, x):
        self._cache = x
        return silu(x)

    def backward(self, dout):
        return dout * dsilu(self._cache)

    def out_hw(self, h, w):
        return h, w

    def mac_count(self, h, w):
        return 0


class GlobalAvgPool:
    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        n, h, w, c = self._cache
        return np.broadcast_to(dout[:, None, None, :], (n, h, w, c)) / (h * w)

    def out_hw(self, h, w):
        return 1, 1

    def mac_count(self, h, w):
        return 0


class Linear:
    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, np.sqrt(2.0 / cin), size=(cin, cout))
        self.b = np.zeros(cout)
        self.dw = None
        self.db = None

    def forward(self, x):
        self._cache = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._cache.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T

    def out_hw(self, h, w):
        return h, w

    def mac_count(self, h, w):
        return self.w.shape[0] * self.w.shape[1]


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class ScaledNet:
    """Classifier materialized from a scaling config.

    Construction is deterministic in (config, seed). Input batches must be
    float arrays of shape (n, r, r, in_channels) with r the resolved
    resolution.
    """

    def __init__(self, config: ScalingConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.arch: ResolvedArch = config.resolve()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
        self.layers = self._build(rng)

    def _build(self, rng):
        arch = self.arch
        layers: list = []
        first_width = arch.stages[0].width
        layers.append(Conv(3, arch.in_channels, first_width, 2, rng))
        layers.append(SiLU())
        ch = first_width
        for stage in arch.stages:
            for _ in range(stage.repeats):
                layers.append(DepthwiseConv(stage.kernel, ch, 1, rng))
                layers.append(SiLU())
                layers.append(Conv(1, ch, stage.width, 1, rng))
                layers.append(SiLU())
                ch = stage.width
        layers.append(GlobalAvgPool())
        layers.append(Linear(ch, arch.n_classes, rng))
        return layers

    # -- shape discipline ---------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        r = self.arch.resolution
        if x.ndim != 4 or x.shape[1] != r or x.shape[2] != r or x.shape[3] != self.arch.in_channels:
            raise ShapeError(
                f"expected input of shape (n, {r}, {r}, {self.arch.in_channels}), got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise NumericError("input batch contains non-finite values")
        return x

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = self._check_input(x)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).argmax(axis=1)

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy and the logit gradient, via log-sum-exp."""
        y = np.asarray(y)
        logits = self.forward(x)
        if y.ndim != 1 or y.shape[0] != logits.shape[0]:
            raise ShapeError(f"labels shape {y.shape} does not match batch {logits.shape[0]}")
        if y.min() < 0 or y.max() >= logits.shape[1]:
            raise ShapeError(f"labels outside [0, {logits.shape[1]})")
        m = logits.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
        logp = logits - lse
        n = logits.shape[0]
        loss = float(-logp[np.arange(n), y].mean())
        dlogits = np.exp(logp)
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        return loss, dlogits

    def backward(self, dlogits: np.ndarray) -> None:
        dout = dlogits
        for layer in reversed(self.layers):
            dout = layer.backward(dout)

    def train_batch(self, x: np.ndarray, y: np.ndarray, lr: float) -> float:
        """One SGD step on a batch; returns the pre-step loss.

        Gradients are verified finite before anything is applied; a numeric
        failure leaves the parameters untouched.
        """
        if lr < 0:
            raise ParameterError(f"lr must be >= 0, got {lr}")
        loss, dlogits = self.loss_and_grad(x, y)
        self.backward(dlogits)
        params = self.param_layers()
        finite = np.isfinite(loss) and all(
            np.all(np.isfinite(l.dw)) and np.all(np.isfinite(l.db)) for l in params
        )
        if not finite:
            raise NumericError("non-finite loss or gradient; parameters unchanged")
        if lr > 0:
            for layer in params:
                layer.w -= lr * layer.dw
                layer.b -= lr * layer.db
        return loss

    # -- bookkeeping --------------------------------------------------------

    def param_layers(self):
        return [l for l in self.layers if hasattr(l, "w")]

    def param_count(self) -> int:
        return sum(l.w.size + l.b.size for l in self.param_layers())

    def mac_count(self) -> int:
        """Recount multiply-accumulates from the tensors actually built.

        Walks the layer list propagating the spatial size, asking each layer
        to price itself from its own weight shapes. Checked elsewhere against
        the analytic count derived from the scaling config alone.
        """
        h = w = self.arch.resolution
        total = 0
        for layer in self.layers:
            total += layer.mac_count(h, w)
            h, w = layer.out_hw(h, w)
        return total

    def analytic_macs(self) -> int:
        return count_macs(self.arch)

    def analytic_params(self) -> int:
        return count_params(self.arch)

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        """Write magic, version, scaling config JSON, then f32 tensors in order."""
        doc = json.dumps(self.config.to_json(), sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            fh.write(PARAMS_MAGIC)
            fh.write(struct.pack("<I", PARAMS_VERSION))
            fh.write(struct.pack("<I", len(doc)))
            fh.write(doc)
            for layer in self.param_layers():
                fh.write(np.ascontiguousarray(layer.w, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(layer.b, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "ScaledNet":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 12 or blob[:4] != PARAMS_MAGIC:
            raise ParameterError(f"{path} is not a model parameter file")
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != PARAMS_VERSION:
            raise VersionError(f"unsupported parameter file version {version}")
        (json_len,) = struct.unpack_from("<I", blob, 8)
        header_end = 12 + json_len
        if len(blob) < header_end:
            raise ParameterError("truncated parameter file header")
        try:
            doc = json.loads(blob[12:header_end].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParameterError(f"bad config block in parameter file: {exc}") from None
        net = cls(ScalingConfig.from_json(doc), seed=0)
        offset = header_end
        for layer in net.param_layers():
            for name in ("w", "b"):
                arr = getattr(layer, name)
                nbytes = arr.size * 4
                if offset + nbytes > len(blob):
                    raise ParameterError("parameter file ends before all tensors were read")
                flat = np.frombuffer(blob, dtype="<f4", count=arr.size, offset=offset)
                setattr(layer, name, flat.astype(np.float64).reshape(arr.shape))
                offset += nbytes
        if offset != len(blob):
            raise ParameterError(f"{len(blob) - offset} trailing bytes in parameter file")
        return net


def build_net(config: ScalingConfig, seed: int = 0) -> ScaledNet:
    """Materialize the resolved architecture with deterministic init."""
    return ScaledNet(config, seed)


def predict_risk(
    net: ScaledNet,
    image,
    threshold: float = DEFAULT_THRESHOLD,
    model_version: int = 0,
    patient_id: str | None = None,
    t_ms: int | None = None,
) -> RiskPrediction:
    """Run one feature image through the net and threshold the arrest class.

    `image` may be a rasterized FeatureImage (its provenance is used unless
    overridden) or a bare (r, r, k) array with explicit provenance.
    """
    tensor = getattr(image, "tensor", image)
    if patient_id is None:
        patient_id = getattr(image, "patient_id", None)
    if t_ms is None:
        t_ms = getattr(image, "t_ms", None)
    if patient_id is None or t_ms is None:
        raise ParameterError("predict_risk needs patient_id and t_ms provenance")
    proba = net.predict_proba(tensor[None, ...])[0]
    p_arrest = float(proba[1])
    return RiskPrediction(
        patient_id=patient_id,
        t_ms=int(t_ms),
        p_arrest=p_arrest,
        decision=bool(p_arrest >= threshold),
        source="model",
        model_version=model_version,
    )


def fine_tune(net: ScaledNet, batch: list, lr: float) -> float:
    """One gradient step on a batch of (feature image, binary label) pairs.

    Returns the pre-step mean cross-entropy. lr = 0 reports the loss and
    changes nothing; a non-finite loss or gradient raises and leaves
    parameters untouched.
    """
    if not batch:
        raise DegenerateInputError("fine_tune needs a nonempty batch")
    images = np.stack([np.asarray(getattr(img, "tensor", img), dtype=np.float64)
                       for img, _ in batch])
    labels = np.array([int(label) for _, label in batch])
    if not np.all((labels == 0) | (labels == 1)):
        raise ShapeError(f"labels must be binary, got {sorted(set(labels.tolist()))}")
    return net.train_batch(images, labels, lr)


# ---------------------------------------------------------------------------
# Training loop and gradient verification
# ---------------------------------------------------------------------------


def fit(
    net: ScaledNet,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int = 15,
    lr: float = 0.2,
    batch_size: int = 32,
    seed: int = 0,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
    verbose: bool = False,
) -> list[dict]:
    """Plain SGD with a per-epoch seeded shuffle; returns per-epoch history."""
    n = len(x)
    history = []
    for epoch in range(epochs):
        order = np.random.default_rng(np.random.SeedSequence([seed, epoch, 0xE90C])).permutation(n)
        total = 0.0
        for i in range(0, n, batch_size):
            b = order[i : i + batch_size]
            total += net.train_batch(x[b], y[b], lr) * len(b)
        entry = {"epoch": epoch, "loss": total / n}
        if eval_set is not None:
            entry["heldout_accuracy"] = float(accuracy(net, eval_set[0], eval_set[1]))
        history.append(entry)
        if verbose:
            msg = f"epoch {epoch:3d}  loss {entry['loss']:.4f}"
            if "heldout_accuracy" in entry:
                msg += f"  heldout {entry['heldout_accuracy']:.4f}"
            print(msg)
    return history


def accuracy(net: ScaledNet, x: np.ndarray, y: np.ndarray) -> float:
    return float((net.predict(x) == np.asarray(y)).mean())


def gradient_check(
    net: ScaledNet,
    x: np.ndarray,
    y: np.ndarray,
    n_checks: int = 50,
    h: float = 1e-4,
    seed: int = 42,
) -> float:
    """Compare backprop against central differences at random weights.

    Returns the worst relative error over `n_checks` randomly selected
    weight (or bias) entries. Uses symmetric perturbation, so truncation
    error is O(h^2); the activation is smooth everywhere, which keeps the
    comparison honest.
    """
    loss, dlogits = net.loss_and_grad(x, y)
    net.backward(dlogits)
    grads = [(l, l.dw.copy(), l.db.copy()) for l in net.param_layers()]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_checks):
        layer, dw, db = grads[rng.integers(len(grads))]
        use_w = rng.random() < 0.8
        arr = layer.w if use_w else layer.b
        grad = dw if use_w else db
        idx = tuple(int(rng.integers(s)) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + h
        lp, _ = net.loss_and_grad(x, y)
        arr[idx] = old - h
        lm, _ = net.loss_and_grad(x, y)
        arr[idx] = old
        fd = (lp - lm) / (2.0 * h)
        an = grad[idx]
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst
