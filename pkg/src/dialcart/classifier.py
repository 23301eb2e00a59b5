"""Reference text classifier: hashed n-gram features + multinomial linear model.

The trainer minimizes cross-entropy by mini-batch adaptive gradient
descent with decoupled weight decay, and records per-instance training
dynamics (gold-label probability and argmax-correct flag) at the end of
every epoch.  Any backbone honoring the same train / predict_proba /
epoch_snapshots / featurize surface can be swapped in.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TrainingError(ValueError):
    """Bad training inputs."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during optimization."""


_WORD = re.compile(r"\w+")


@dataclass(frozen=True)
class FeatureHasher:
    """Deterministic text -> sparse vector config.

    Word tokens are lowercased, truncated to ``max_tokens``, combined into
    n-grams, and hashed with ``salt`` into ``[0, dim)``.
    """

    ngram_min: int = 1
    ngram_max: int = 2
    dim: int = 2048
    salt: int = 0
    max_tokens: int = 128

    def __post_init__(self):
        if self.dim < 2:
            raise TrainingError(f"hasher dim must be >= 2, got {self.dim}")
        if not 1 <= self.ngram_min <= self.ngram_max:
            raise TrainingError(
                f"bad n-gram range ({self.ngram_min}, {self.ngram_max})"
            )

    def to_dict(self) -> dict:
        return {
            "ngram_min": self.ngram_min,
            "ngram_max": self.ngram_max,
            "dim": self.dim,
            "salt": self.salt,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureHasher":
        return cls(**d)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized bag of hashed n-grams."""

    weights: dict[int, float]
    dim: int

    def to_dense(self) -> np.ndarray:
        v = np.zeros(self.dim)
        for i, w in self.weights.items():
            v[i] = w
        return v


def _hash_ngram(gram: str, salt: int, dim: int) -> int:
    digest = hashlib.blake2b(f"{salt}|{gram}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def featurize(text: str, hasher: FeatureHasher) -> FeatureVector:
    """Hashed n-gram counts, L2-normalized. Empty text gives the zero vector."""
    tokens = _WORD.findall(text.lower())[: hasher.max_tokens]
    counts: dict[int, float] = {}
    for n in range(hasher.ngram_min, hasher.ngram_max + 1):
        for j in range(len(tokens) - n + 1):
            gram = " ".join(tokens[j : j + n])
            idx = _hash_ngram(gram, hasher.salt, hasher.dim)
            counts[idx] = counts.get(idx, 0.0) + 1.0
    norm = np.sqrt(sum(w * w for w in counts.values()))
    if norm > 0:
        counts = {i: w / norm for i, w in counts.items()}
    return FeatureVector(weights=counts, dim=hasher.dim)


def featurize_matrix(texts: list[str], hasher: FeatureHasher) -> np.ndarray:
    """Dense (n_texts, dim) feature matrix."""
    x = np.zeros((len(texts), hasher.dim))
    for row, text in enumerate(texts):
        for i, w in featurize(text, hasher).weights.items():
            x[row, i] = w
    return x


@dataclass
class ModelParams:
    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    scheme_version: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise TrainingError("model parameters contain non-finite entries")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise TrainingError("weights/bias class dimension mismatch")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.bias.copy(), self.scheme_version)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 50
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise TrainingError("bad learning_rate/weight_decay")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
        }


@dataclass
class TrainingDynamics:
    """Per-instance, per-epoch record: gold-label probability and whether the
    argmax prediction matched the gold label at the end of each epoch."""

    gold_probs: np.ndarray  # (N, E) floats in [0, 1]
    correct: np.ndarray  # (N, E) bools

    def __post_init__(self):
        if self.gold_probs.shape != self.correct.shape:
            raise TrainingError("dynamics matrices are not rectangular-aligned")

    @property
    def num_instances(self) -> int:
        return self.gold_probs.shape[0]

    @property
    def num_epochs(self) -> int:
        return self.gold_probs.shape[1]


@dataclass
class TrainResult:
    params: ModelParams
    dynamics: TrainingDynamics
    epoch_params: list[ModelParams] = field(repr=False, default_factory=list)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch and its analytic gradients."""
    logits = x @ weights.T + bias
    probs = _softmax(logits)
    n = len(y)
    loss = -float(np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))
    g = probs
    g[np.arange(n), y] -= 1.0
    g /= n
    return loss, g.T @ x, g.sum(axis=0)


def _as_arrays(examples, dim_hint: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(examples, tuple) and len(examples) == 2:
        x, y = examples
        return np.asarray(x, dtype=float), np.asarray(y, dtype=int)
    vectors = [fv for fv, _ in examples]
    y = np.array([c for _, c in examples], dtype=int)
    if not vectors:
        return np.zeros((0, dim_hint or 0)), y
    x = np.zeros((len(vectors), vectors[0].dim))
    for row, fv in enumerate(vectors):
        for i, w in fv.weights.items():
            x[row, i] = w
    return x, y


def train(
    examples,
    config: TrainConfig,
    num_classes: int,
    scheme_version: str = "",
) -> TrainResult:
    """Train the linear model; deterministic given ``config.seed``.

    ``examples`` is either a list of (FeatureVector, class_index) pairs or a
    prepared ``(X, y)`` pair of arrays.  At the end of every epoch all
    training examples are evaluated and their dynamics recorded, and the
    epoch's parameters are snapshotted (oldest first in the result).
    """
    x, y = _as_arrays(examples)
    n = x.shape[0]
    if n == 0:
        raise TrainingError("cannot train on an empty example list")
    if y.min() < 0 or y.max() >= num_classes:
        raise TrainingError(
            f"class index out of range: saw {y.max()} with num_classes={num_classes}"
        )
    c, d = num_classes, x.shape[1]
    w = np.zeros((c, d))
    b = np.zeros(c)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr, wd = config.learning_rate, config.weight_decay
    rng = np.random.default_rng(config.seed)
    gold_probs = np.zeros((n, config.epochs))
    correct = np.zeros((n, config.epochs), dtype=bool)
    epoch_params: list[ModelParams] = []
    step = 0
    rows = np.arange(n)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, g_w, g_b = cross_entropy_loss_and_grad(w, b, x[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step} "
                    f"(lr={lr}, batch={len(batch)}): {loss}"
                )
            step += 1
            m_w = beta1 * m_w + (1 - beta1) * g_w
            v_w = beta2 * v_w + (1 - beta2) * g_w * g_w
            m_b = beta1 * m_b + (1 - beta1) * g_b
            v_b = beta2 * v_b + (1 - beta2) * g_b * g_b
            bc1 = 1 - beta1**step
            bc2 = 1 - beta2**step
            w -= lr * ((m_w / bc1) / (np.sqrt(v_w / bc2) + eps) + wd * w)
            b -= lr * (m_b / bc1) / (np.sqrt(v_b / bc2) + eps)
        probs = _softmax(x @ w.T + b)
        if not np.isfinite(probs).all():
            raise TrainingDivergedError(
                f"non-finite loss/probabilities at end of epoch {epoch} (lr={lr}); "
                "lower the learning rate"
            )
        gold_probs[:, epoch] = probs[rows, y]
        correct[:, epoch] = probs.argmax(axis=1) == y
        epoch_params.append(ModelParams(w.copy(), b.copy(), scheme_version))
    return TrainResult(
        params=epoch_params[-1],
        dynamics=TrainingDynamics(gold_probs=gold_probs, correct=correct),
        epoch_params=epoch_params,
    )


def predict_proba(params: ModelParams, features: FeatureVector) -> np.ndarray:
    """Softmax class distribution for one feature vector."""
    if features.dim != params.dim:
        raise TrainingError(
            f"feature dimension {features.dim} does not match model dimension {params.dim}"
        )
    return _softmax(params.weights @ features.to_dense() + params.bias)


def predict_proba_matrix(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Softmax class distributions for a dense (n, D) feature matrix."""
    if x.shape[1] != params.dim:
        raise TrainingError(
            f"feature dimension {x.shape[1]} does not match model dimension {params.dim}"
        )
    return _softmax(x @ params.weights.T + params.bias)


def epoch_snapshots(result: TrainResult, k: int) -> list[ModelParams]:
    """Parameters captured at the last ``k`` epoch boundaries, oldest first."""
    e = len(result.epoch_params)
    if not 1 <= k <= e:
        raise TrainingError(f"snapshot count {k} out of range for {e} epochs")
    return result.epoch_params[-k:]


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    hasher: FeatureHasher,
    snapshots: list[ModelParams] | None = None,
) -> None:
    """Versioned JSON checkpoint; floats round-trip bit-exactly."""
    payload = {
        "format_version": 1,
        "scheme_version": params.scheme_version,
        "hasher": hasher.to_dict(),
        "weights": params.weights.tolist(),
        "bias": params.bias.tolist(),
    }
    if snapshots:
        payload["snapshots"] = [
            {"weights": p.weights.tolist(), "bias": p.bias.tolist()} for p in snapshots
        ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(
    path: str | Path,
) -> tuple[ModelParams, FeatureHasher, list[ModelParams]]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise TrainingError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    version = payload.get("scheme_version", "")
    params = ModelParams(
        np.array(payload["weights"]), np.array(payload["bias"]), version
    )
    hasher = FeatureHasher.from_dict(payload["hasher"])
    snapshots = [
        ModelParams(np.array(s["weights"]), np.array(s["bias"]), version)
        for s in payload.get("snapshots", [])
    ]
    return params, hasher, snapshots
