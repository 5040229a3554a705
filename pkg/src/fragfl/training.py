"""Desk-scale datasets, models with analytic gradients, local SGD and metrics.

Training math runs in float64; parameters enter and leave as 32-bit words.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, FormatError, TrainingError
from .params import LayerLayout, ParamWords

# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int
    split: str = "train"

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DomainError("features must be (n, d) with one label per row")
        if not np.all(np.isfinite(X)):
            raise DomainError("feature matrix must be finite")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DomainError("labels must lie in [0, n_classes)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, idx: np.ndarray, split: str | None = None) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, split or self.split)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.n_classes, self.split)


def synth_dataset(seed: int, n: int, d: int, z: int, separation: float, split: str = "train") -> Dataset:
    """Gaussian class blobs with unit variance.

    Class means sit at distance ``separation / 2`` from the origin along
    random directions; with two classes they are antipodal, so the centres
    are exactly ``separation`` apart.  Each class mean depends only on
    ``seed``, which lets train and test sets share their blobs while drawing
    different samples via ``split``.
    """
    if min(n, d, z) < 1:
        raise DomainError("n, d and z must be >= 1")
    means_rng = np.random.default_rng([seed, 0])
    dirs = means_rng.normal(size=(z, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if z == 2:
        dirs[1] = -dirs[0]
    means = dirs * (separation / 2.0)
    rng = np.random.default_rng([seed, 1, zlib.crc32(split.encode())])
    labels = rng.integers(0, z, size=n)
    X = means[labels] + rng.normal(size=(n, d))
    return Dataset(X, labels, z, split)


def split_uniform(data: Dataset, k: int, rng: np.random.Generator) -> list[Dataset]:
    """Random, near-equal split of ``data`` among ``k`` participants."""
    perm = rng.permutation(len(data))
    return [data.subset(np.sort(part)) for part in np.array_split(perm, k)]


def save_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(data.n_features)] + ["label"])
        for x, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path: str | Path, schema: dict | None = None) -> Dataset:
    """Read a header + numeric features + final integer label CSV.

    ``schema`` may give ``n_classes`` (otherwise ``max(label) + 1``),
    ``n_features`` (checked when present) and ``split``.
    """
    schema = schema or {}
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise FormatError(f"{path}:1: need at least one feature and a label column")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                feats = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            rows.append(feats)
            labels.append(label)
    if "n_features" in schema and schema["n_features"] != width - 1:
        raise FormatError(f"{path}: schema declares {schema['n_features']} features, file has {width - 1}")
    n_classes = int(schema.get("n_classes", (max(labels) + 1) if labels else 1))
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), width - 1)
    return Dataset(X, np.asarray(labels, dtype=np.int64), n_classes, schema.get("split", "train"))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def _cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logz - shifted[np.arange(y.size), y]))
    probs = np.exp(shifted - logz[:, None])
    return loss, probs


@dataclass(frozen=True)
class ModelSpec:
    """``softmax`` regression (d -> z) or ``mlp1`` (d -> h ReLU -> z).

    Parameters are laid out row-major as W (out x in) followed by its bias,
    layer by layer; the final layer is the last weight matrix and bias.
    """

    kind: str
    d: int
    z: int
    h: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("softmax", "mlp1"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp1" and self.h < 1:
            raise ConfigError("mlp1 needs a hidden width h >= 1")

    @property
    def layout(self) -> LayerLayout:
        d, z, h = self.d, self.z, self.h
        if self.kind == "softmax":
            return LayerLayout.from_shapes([("W", "weight", z * d), ("b", "bias", z)], 0)
        return LayerLayout.from_shapes(
            [("W1", "weight", h * d), ("b1", "bias", h), ("W2", "weight", z * h), ("b2", "bias", z)], 2
        )

    @property
    def n_params(self) -> int:
        return self.layout.total

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        d, z, h = self.d, self.z, self.h
        if self.kind == "softmax":
            return [theta[: z * d].reshape(z, d), theta[z * d :]]
        a = h * d
        return [
            theta[:a].reshape(h, d),
            theta[a : a + h],
            theta[a + h : a + h + z * h].reshape(z, h),
            theta[a + h + z * h :],
        ]

    def init_params(self, seed: int) -> ParamWords:
        rng = np.random.default_rng(seed)
        if self.kind == "softmax":
            theta = np.concatenate([rng.normal(0, 0.01, self.z * self.d), np.zeros(self.z)])
        else:
            w1 = rng.normal(0, 1 / math.sqrt(self.d), self.h * self.d)
            w2 = rng.normal(0, 1 / math.sqrt(self.h), self.z * self.h)
            theta = np.concatenate([w1, np.zeros(self.h), w2, np.zeros(self.z)])
        return ParamWords.from_floats(theta, self.layout)

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        parts = self.unpack(theta)
        if self.kind == "softmax":
            W, b = parts
            return X @ W.T + b
        W1, b1, W2, b2 = parts
        return np.maximum(X @ W1.T + b1, 0.0) @ W2.T + b2

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        return _cross_entropy(self.logits(theta, X), y)[0]

    def loss_and_grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its gradient w.r.t. ``theta``."""
        n = y.size
        parts = self.unpack(theta)
        if self.kind == "softmax":
            W, b = parts
            loss, probs = _cross_entropy(X @ W.T + b, y)
            delta = probs
            delta[np.arange(n), y] -= 1.0
            delta /= n
            return loss, np.concatenate([(delta.T @ X).ravel(), delta.sum(axis=0)])
        W1, b1, W2, b2 = parts
        pre = X @ W1.T + b1
        hid = np.maximum(pre, 0.0)
        loss, probs = _cross_entropy(hid @ W2.T + b2, y)
        delta2 = probs
        delta2[np.arange(n), y] -= 1.0
        delta2 /= n
        g_w2 = delta2.T @ hid
        g_b2 = delta2.sum(axis=0)
        delta1 = (delta2 @ W2) * (pre > 0)
        g_w1 = delta1.T @ X
        g_b1 = delta1.sum(axis=0)
        return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


# ---------------------------------------------------------------------------
# Local training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    E: int = 1
    BS: int = 32
    eta: float = 0.1
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.E < 1 or self.BS < 1:
            raise ConfigError("E and BS must be >= 1")
        if self.eta < 0 or self.momentum < 0:
            raise ConfigError("eta and momentum must be non-negative")


def train_local(W: ParamWords, data: Dataset, cfg: TrainConfig, spec: ModelSpec) -> ParamWords:
    """E epochs of shuffled mini-batch SGD (optionally with momentum)."""
    if W.layout != spec.layout:
        raise DomainError("parameter layout does not match the model")
    if data.n_features != spec.d:
        raise DomainError("dataset feature count does not match the model")
    theta = W.floats64()
    velocity = np.zeros_like(theta)
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for _ in range(cfg.E):
        order = rng.permutation(n)
        for start in range(0, n, cfg.BS):
            idx = order[start : start + cfg.BS]
            with np.errstate(invalid="ignore", over="ignore"):
                loss, grad = spec.loss_and_grad(theta, data.features[idx], data.labels[idx])
            if not math.isfinite(loss):
                raise TrainingError("local training produced a non-finite loss")
            velocity = cfg.momentum * velocity + grad
            theta = theta - cfg.eta * velocity
    return ParamWords.from_floats(theta, spec.layout)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    te: float
    all_acc: float
    src_acc: float | None
    asr: float | None

    def to_dict(self) -> dict:
        return {"TE": self.te, "all_acc": self.all_acc, "src_acc": self.src_acc, "asr": self.asr}


def metrics_from_predictions(
    pred: np.ndarray, y: np.ndarray, te: float, src_class: int | None, target_class: int | None
) -> Metrics:
    all_acc = float(np.mean(pred == y))
    src_acc = asr = None
    if src_class is not None:
        sel = y == src_class
        if sel.any():
            src_acc = float(np.mean(pred[sel] == src_class))
            if target_class is not None:
                asr = float(np.mean(pred[sel] == target_class))
    return Metrics(te, all_acc, src_acc, asr)


def evaluate(
    W: ParamWords | np.ndarray,
    test: Dataset,
    spec: ModelSpec,
    src_class: int | None = None,
    target_class: int | None = None,
) -> Metrics:
    """TE (mean cross-entropy), overall accuracy, source-class accuracy, ASR.

    Source-class metrics are ``None`` when the class is absent from ``test``.
    """
    if len(test) == 0:
        raise DomainError("empty test set")
    theta = W.floats64() if isinstance(W, ParamWords) else np.asarray(W, dtype=np.float64)
    logits = spec.logits(theta, test.features)
    te, _ = _cross_entropy(logits, test.labels)
    return metrics_from_predictions(np.argmax(logits, axis=1), test.labels, te, src_class, target_class)
