"""Linear learners trained by seeded mini-batch gradient descent.

A ``LearnerState`` holds the parameters of either a softmax classifier
(``C x d`` weights, ``C`` biases, cross-entropy loss) or a linear regressor
(``d`` weights, scalar bias, squared-error loss). Every function here takes a
state and returns new values; ``fit`` never mutates its input.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, TrainingError
from .streamgen import CLASSIFICATION, KINDS, REGRESSION

CHECKPOINT_VERSION = 1


@dataclass
class LearnerState:
    weights: np.ndarray
    bias: np.ndarray
    kind: str = CLASSIFICATION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown learner kind {self.kind!r}")
        self.weights = np.array(self.weights, dtype=float)
        self.bias = np.array(self.bias, dtype=float)
        if self.kind == CLASSIFICATION:
            if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
                raise InputError("classifier needs (C, d) weights and (C,) bias")
        elif self.weights.ndim != 1 or self.bias.shape != ():
            raise InputError("regressor needs (d,) weights and a scalar bias")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise TrainingError("non-finite learner parameters")

    @property
    def d(self) -> int:
        return self.weights.shape[-1]

    @property
    def n_classes(self) -> Optional[int]:
        return self.weights.shape[0] if self.kind == CLASSIFICATION else None

    def clone(self) -> "LearnerState":
        return LearnerState(self.weights.copy(), self.bias.copy(), self.kind)

    def params(self) -> np.ndarray:
        """Flat parameter vector (weights then bias)."""
        return np.concatenate([self.weights.ravel(), np.atleast_1d(self.bias)])

    def with_params(self, flat) -> "LearnerState":
        flat = np.asarray(flat, dtype=float)
        n = self.weights.size
        w = flat[:n].reshape(self.weights.shape)
        b = flat[n:].reshape(self.bias.shape)
        return LearnerState(w, b, self.kind)

    def equals(self, other: "LearnerState") -> bool:
        """Bitwise parameter equality."""
        return (self.kind == other.kind
                and self.weights.shape == other.weights.shape
                and self.weights.tobytes() == other.weights.tobytes()
                and self.bias.tobytes() == other.bias.tobytes())


def zero_classifier(d: int, C: int) -> LearnerState:
    return LearnerState(np.zeros((C, d)), np.zeros(C), CLASSIFICATION)


def zero_regressor(d: int) -> LearnerState:
    return LearnerState(np.zeros(d), np.zeros(()), REGRESSION)


def initial_state(kind: str, d: int, C: Optional[int] = None) -> LearnerState:
    return zero_classifier(d, C) if kind == CLASSIFICATION else zero_regressor(d)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 1
    batch_size: int = 64
    shuffle_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InputError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise InputError("epochs must be at least 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1")


def _features(state: LearnerState, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != state.d:
        raise InputError(f"feature dimension {x.shape[-1]} != learner dimension {state.d}")
    return x


def _require_labels(state, x, y):
    if y is None:
        raise InputError("batch contains unlabelled examples")
    y = np.asarray(y)
    if y.dtype == object:
        if any(v is None for v in y):
            raise InputError("batch contains unlabelled examples")
        y = y.astype(float)
    if y.shape != (x.shape[0],):
        raise InputError("one target per example required")
    if state.kind == CLASSIFICATION:
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(y == np.round(y)):
                raise InputError("class targets must be integers")
            y = y.astype(int)
        if y.size and (y.min() < 0 or y.max() >= state.n_classes):
            raise InputError("class target out of range")
    else:
        y = y.astype(float)
    return y


def logits(state: LearnerState, x) -> np.ndarray:
    x = _features(state, x)
    return x @ state.weights.T + state.bias


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(state: LearnerState, x) -> np.ndarray:
    """Class probabilities for one feature vector or a ``(n, d)`` batch."""
    if state.kind != CLASSIFICATION:
        raise InputError("predict_proba is defined for classifiers only")
    return softmax(logits(state, x))


def predict(state: LearnerState, x):
    """Class index (argmax, ties to the lowest index) or regression value."""
    x = _features(state, x)
    if state.kind == CLASSIFICATION:
        # np.argmax returns the first maximum
        return np.argmax(predict_proba(state, x), axis=-1)
    return x @ state.weights + state.bias


def per_sample_loss(state: LearnerState, x, y) -> np.ndarray:
    x = _features(state, np.atleast_2d(x))
    y = _require_labels(state, x, np.atleast_1d(y))
    if state.kind == CLASSIFICATION:
        z = logits(state, x)
        zmax = z.max(axis=1)
        lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        return lse - z[np.arange(len(y)), y]
    r = x @ state.weights + state.bias - y
    return r * r


def loss(state: LearnerState, x, y) -> float:
    """Mean cross-entropy (classifier) or mean squared error (regressor)."""
    losses = per_sample_loss(state, x, y)
    if losses.size == 0:
        raise InputError("empty batch")
    return float(losses.mean())


def gradient(state: LearnerState, x, y):
    """Analytic gradient of ``loss`` as ``(grad_weights, grad_bias)``."""
    x = _features(state, np.atleast_2d(x))
    y = _require_labels(state, x, np.atleast_1d(y))
    n = len(y)
    if n == 0:
        raise InputError("empty batch")
    if state.kind == CLASSIFICATION:
        delta = predict_proba(state, x)
        delta[np.arange(n), y] -= 1.0
        return delta.T @ x / n, delta.sum(axis=0) / n
    r = x @ state.weights + state.bias - y
    return 2.0 * (r @ x) / n, np.asarray(2.0 * r.sum() / n)


def fit(state: LearnerState, x, y, cfg: TrainConfig) -> LearnerState:
    """``cfg.epochs`` passes of shuffled mini-batch gradient descent.

    An empty batch returns an identical clone.
    """
    x = _features(state, np.asarray(x, dtype=float).reshape(-1, state.d))
    new = state.clone()
    n = len(x)
    if n == 0:
        return new
    y = _require_labels(state, x, y)
    rng = np.random.default_rng(cfg.shuffle_seed)
    w, b = new.weights, new.bias
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                gw, gb = gradient(LearnerState(w, b, state.kind), x[idx], y[idx])
                w = w - cfg.learning_rate * gw
                b = b - cfg.learning_rate * gb
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise TrainingError("training diverged (non-finite parameters)")
    return LearnerState(w, b, state.kind)


# -- checkpoints -------------------------------------------------------------

def state_to_dict(state: LearnerState) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "kind": state.kind,
        "d": state.d,
        "C": state.n_classes,
        "weights": state.weights.tolist(),
        "bias": state.bias.tolist(),
    }


def state_from_dict(doc: dict) -> LearnerState:
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {doc.get('version')!r}")
    state = LearnerState(np.array(doc["weights"], dtype=float),
                         np.array(doc["bias"], dtype=float), doc["kind"])
    if state.d != doc["d"] or state.n_classes != doc["C"]:
        raise InputError("checkpoint metadata disagrees with parameter shapes")
    return state


def save_checkpoint(state: LearnerState, path) -> None:
    # json writes floats with repr, which round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_dict(state), fh)


def load_checkpoint(path) -> LearnerState:
    with open(path, encoding="utf-8") as fh:
        return state_from_dict(json.load(fh))
