"""Continual semi-supervised protocol.

A labelled sequence is cut into a supervised fold S and two unlabelled folds
V and T. The unlabelled stream is partitioned into sub-folds; each sub-fold
is one self-training session: pseudo-label it with the incoming model, keep
the labels whose confidence is strictly above the threshold, retrain on
them, and record predictions. The model leaving session ``n`` enters
session ``n + 1``.

Hidden V/T labels are moved into a ``SealedLabels`` channel at split time;
nothing in this module reads them.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import learners
from .errors import ConfigError, InputError
from .learners import LearnerState, TrainConfig
from .streamgen import CLASSIFICATION, REGRESSION, Sequence

FOLDS = ("V", "T")
MODES = ("sup-ft", "upd-V", "upd-T", "upd-V+T")
EVAL_MODES = ("post_update", "pre_update")
WARMUP_SESSION = -1  # session index recorded for predictions of the warm-up model


@dataclass(frozen=True)
class SealedLabels:
    """Ground truth withheld from training, keyed by ``(sequence_id, t)``."""

    sequence_id: str
    t: np.ndarray
    fold: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.t)

    def select(self, fold: str) -> "SealedLabels":
        m = self.fold == fold
        return SealedLabels(self.sequence_id, self.t[m], self.fold[m], self.y[m])


@dataclass
class FoldSplit:
    S: Sequence
    V: Sequence
    T: Sequence
    sealed: SealedLabels

    @property
    def sequence_id(self) -> str:
        return self.S.sequence_id if len(self.S) else self.V.sequence_id


def _maybe_slice(seq: Sequence, start: int, stop: int, keep_labels: bool):
    if stop > start:
        return seq.slice(start, stop, keep_labels)
    return _EmptyFold(seq, start)


class _EmptyFold:
    """Zero-length fold stand-in (``Sequence`` itself must be non-empty)."""

    def __init__(self, parent: Sequence, start: int):
        self.x = np.zeros((0, parent.d))
        self.y = None
        self.kind = parent.kind
        self.n_classes = parent.n_classes
        self.sequence_id = parent.sequence_id
        self.group = parent.group
        self.t0 = parent.t0 + start
        self.d = parent.d
        self.t = np.zeros(0, dtype=int)

    def __len__(self):
        return 0


def split_folds(seq: Sequence, sizes) -> FoldSplit:
    """Contiguous S/V/T split; V and T labels go to the sealed channel."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ConfigError("fold sizes must be three nonnegative integers")
    if sum(sizes) != len(seq):
        raise ConfigError(
            f"fold sizes {sizes} sum to {sum(sizes)}, sequence has {len(seq)} examples")
    if not seq.labelled:
        raise InputError("split_folds needs a labelled sequence")
    s, v, _ = sizes
    S = _maybe_slice(seq, 0, s, keep_labels=True)
    V = _maybe_slice(seq, s, s + v, keep_labels=False)
    T = _maybe_slice(seq, s + v, len(seq), keep_labels=False)
    fold = np.array(["V"] * v + ["T"] * (len(seq) - s - v))
    sealed = SealedLabels(seq.sequence_id, seq.t[s:], fold, seq.y[s:].copy())
    return FoldSplit(S, V, T, sealed)


@dataclass
class Subfold:
    index: int
    x: np.ndarray
    t: np.ndarray
    fold: np.ndarray
    sequence_id: str = "seq"

    def __len__(self):
        return len(self.x)


def unlabelled_stream(split: FoldSplit, folds=FOLDS) -> Subfold:
    """The selected unlabelled folds as one contiguous stream."""
    parts = [getattr(split, f) for f in folds]
    x = np.concatenate([p.x for p in parts]) if parts else np.zeros((0, split.S.d))
    t = np.concatenate([p.t for p in parts]).astype(int) if parts else np.zeros(0, int)
    tags = np.array([f for f, p in zip(folds, parts) for _ in range(len(p))], dtype="<U1")
    return Subfold(0, x, t, tags, split.sequence_id)


def partition_subfolds(stream: Subfold, subfold_size: int) -> list:
    """Contiguous chunks of ``subfold_size``; the last one may be shorter."""
    if subfold_size < 1:
        raise ConfigError("subfold_size must be at least 1")
    out = []
    for k, start in enumerate(range(0, len(stream), subfold_size)):
        sl = slice(start, start + subfold_size)
        out.append(Subfold(k, stream.x[sl], stream.t[sl], stream.fold[sl], stream.sequence_id))
    return out


@dataclass
class PseudoLabelBatch:
    x: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    selected: np.ndarray
    threshold: float

    @property
    def n_selected(self) -> int:
        return int(self.selected.sum())


def pseudo_label(state: LearnerState, subfold: Subfold, threshold: float) -> PseudoLabelBatch:
    """Argmax label and its probability; selected iff probability > threshold."""
    if state.kind != CLASSIFICATION:
        raise InputError("pseudo_label needs a classifier; use pseudo_target for regression")
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("threshold must lie in [0, 1]")
    x = np.asarray(subfold.x, dtype=float).reshape(-1, state.d)
    probs = learners.predict_proba(state, x)
    labels = np.argmax(probs, axis=1)
    conf = probs[np.arange(len(x)), labels]
    return PseudoLabelBatch(x, labels, conf, conf > threshold, threshold)


def pseudo_target(state: LearnerState, subfold: Subfold,
                  residual_quantile: Optional[float] = None) -> PseudoLabelBatch:
    """Regression pseudo-targets: the model's own predictions, all selected.

    ``residual_quantile`` is accepted for configuration symmetry; a model's
    residual on its own pseudo-target is always zero, so the filter keeps
    every sample.
    """
    if state.kind != REGRESSION:
        raise InputError("pseudo_target needs a regressor; use pseudo_label for classification")
    x = np.asarray(subfold.x, dtype=float).reshape(-1, state.d)
    preds = learners.predict(state, x)
    n = len(x)
    return PseudoLabelBatch(x, preds, np.ones(n), np.ones(n, dtype=bool),
                            0.0 if residual_quantile is None else residual_quantile)


@dataclass
class SelfTrainConfig:
    threshold: float = 0.4
    epochs_per_session: int = 1
    eval_mode: str = "post_update"
    learning_rate: float = 0.01
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.epochs_per_session < 1:
            raise ConfigError("epochs_per_session must be at least 1")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError(f"eval_mode must be one of {EVAL_MODES}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    def train_config(self, session: int) -> TrainConfig:
        # seed depends only on (seed, session) so chained runs can be resumed
        seed = int(np.random.SeedSequence([self.seed, session]).generate_state(1)[0])
        return TrainConfig(self.learning_rate, self.epochs_per_session, self.batch_size, seed)


@dataclass
class PredictionLog:
    sequence_id: np.ndarray
    t: np.ndarray
    fold: np.ndarray
    session: np.ndarray
    prediction: np.ndarray
    confidence: np.ndarray

    COLUMNS = ("sequence_id", "t", "fold", "session", "prediction", "confidence")

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls, kind: str = CLASSIFICATION) -> "PredictionLog":
        return cls(np.zeros(0, dtype=object), np.zeros(0, dtype=int), np.zeros(0, dtype="<U1"),
                   np.zeros(0, dtype=int),
                   np.zeros(0, dtype=int if kind == CLASSIFICATION else float), np.zeros(0))

    @classmethod
    def concat(cls, logs) -> "PredictionLog":
        logs = [lg for lg in logs if len(lg)]
        if not logs:
            return cls.empty()
        return cls(*(np.concatenate([getattr(lg, c) for lg in logs]) for c in cls.COLUMNS))

    def select(self, fold: str) -> "PredictionLog":
        m = self.fold == fold
        return PredictionLog(*(getattr(self, c)[m] for c in self.COLUMNS))

    def sorted(self) -> "PredictionLog":
        order = np.lexsort((self.t, self.sequence_id.astype(str)))
        return PredictionLog(*(getattr(self, c)[order] for c in self.COLUMNS))

    def to_csv(self, path) -> None:
        lg = self.sorted()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for i in range(len(lg)):
                pred = lg.prediction[i]
                pred = str(int(pred)) if np.issubdtype(lg.prediction.dtype, np.integer) \
                    else repr(float(pred))
                w.writerow([lg.sequence_id[i], int(lg.t[i]), lg.fold[i], int(lg.session[i]),
                            pred, repr(float(lg.confidence[i]))])

    @classmethod
    def from_csv(cls, path, kind: str = CLASSIFICATION) -> "PredictionLog":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            return cls.empty(kind)
        conv = int if kind == CLASSIFICATION else float
        return cls(
            np.array([r["sequence_id"] for r in rows], dtype=object),
            np.array([int(r["t"]) for r in rows]),
            np.array([r["fold"] for r in rows], dtype="<U1"),
            np.array([int(r["session"]) for r in rows]),
            np.array([conv(r["prediction"]) for r in rows]),
            np.array([float(r["confidence"]) for r in rows]),
        )


def _predictions(state: LearnerState, x: np.ndarray):
    if state.kind == CLASSIFICATION:
        probs = learners.predict_proba(state, x)
        labels = np.argmax(probs, axis=1)
        return labels, probs[np.arange(len(x)), labels]
    return learners.predict(state, x), np.ones(len(x))


def _log(chunk: Subfold, session: int, pred, conf) -> PredictionLog:
    n = len(chunk)
    return PredictionLog(np.full(n, chunk.sequence_id, dtype=object), np.asarray(chunk.t),
                         np.asarray(chunk.fold), np.full(n, session), pred, conf)


def frozen_predictions(state: LearnerState, chunk: Subfold,
                       session: int = WARMUP_SESSION) -> PredictionLog:
    if len(chunk) == 0:
        return PredictionLog.empty(state.kind)
    pred, conf = _predictions(state, np.asarray(chunk.x, dtype=float))
    return _log(chunk, session, pred, conf)


@dataclass
class SessionRecord:
    index: int
    size: int
    n_selected: int
    state: Optional[LearnerState] = None


def self_train_session(state: LearnerState, subfold: Subfold, cfg: SelfTrainConfig,
                       keep_state: bool = False):
    """One session: pseudo-label, retrain on the selected subset, predict.

    Returns ``(new_state, PredictionLog, SessionRecord)``.
    """
    if state.kind == CLASSIFICATION:
        batch = pseudo_label(state, subfold, cfg.threshold)
    else:
        batch = pseudo_target(state, subfold)
    if batch.n_selected:
        new = learners.fit(state, batch.x[batch.selected], batch.labels[batch.selected],
                           cfg.train_config(subfold.index))
    else:
        new = state.clone()
    if cfg.eval_mode == "post_update":
        log = frozen_predictions(new, subfold, subfold.index)
    else:
        log = frozen_predictions(state, subfold, subfold.index - 1)
    record = SessionRecord(subfold.index, len(subfold), batch.n_selected,
                           new if keep_state else None)
    return new, log, record


@dataclass
class ContinualResult:
    final: LearnerState
    log: PredictionLog
    sessions: list = field(default_factory=list)


def run_continual(initial: LearnerState, subfolds, cfg: SelfTrainConfig,
                  keep_states: bool = False) -> ContinualResult:
    """Chain sessions over ``subfolds`` in index order."""
    state = initial.clone()
    logs, records = [], []
    prev = None
    for sf in subfolds:
        if prev is not None and sf.index <= prev:
            raise InputError("subfolds must be in increasing index order")
        prev = sf.index
        state, log, rec = self_train_session(state, sf, cfg, keep_states)
        logs.append(log)
        records.append(rec)
    log = PredictionLog.concat(logs) if logs else PredictionLog.empty(initial.kind)
    return ContinualResult(state, log, records)


@dataclass
class ModeResult:
    mode: str
    log: PredictionLog
    sessions: list
    final: LearnerState
    subfold_sizes: list


def run_mode(split: FoldSplit, warm: LearnerState, mode: str, cfg: SelfTrainConfig,
             subfold_size: int) -> ModeResult:
    """Evaluate one experiment mode on V and T starting from a warm-up model.

    ``sup-ft``: the warm-up model predicts V and T unchanged.
    ``upd-V``: sessions over V; the post-V model predicts T frozen.
    ``upd-T``: the warm-up model predicts V frozen; sessions over T.
    ``upd-V+T``: sessions over V and T as one stream.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    V = unlabelled_stream(split, ("V",))
    T = unlabelled_stream(split, ("T",))
    if mode == "sup-ft":
        log = PredictionLog.concat([frozen_predictions(warm, V), frozen_predictions(warm, T)])
        return ModeResult(mode, log, [], warm.clone(), [])
    if mode == "upd-V+T":
        subfolds = partition_subfolds(unlabelled_stream(split, FOLDS), subfold_size)
        res = run_continual(warm, subfolds, cfg)
        return ModeResult(mode, res.log, res.sessions, res.final, [len(s) for s in subfolds])
    updated, frozen = (V, T) if mode == "upd-V" else (T, V)
    subfolds = partition_subfolds(updated, subfold_size)
    res = run_continual(warm, subfolds, cfg)
    if mode == "upd-V":
        last = subfolds[-1].index if subfolds else WARMUP_SESSION
        log = PredictionLog.concat([res.log, frozen_predictions(res.final, T, last)])
    else:
        log = PredictionLog.concat([frozen_predictions(warm, V), res.log])
    return ModeResult(mode, log, res.sessions, res.final, [len(s) for s in subfolds])


def warm_up(x, y, kind: str, d: int, C: Optional[int], cfg: TrainConfig) -> LearnerState:
    """Supervised training from the all-zero initial state."""
    return learners.fit(learners.initial_state(kind, d, C), x, y, cfg)


def union_supervised(splits) -> tuple:
    """Stack the S folds of several splits, for a shared warm-up."""
    xs = [s.S.x for s in splits if len(s.S)]
    ys = [s.S.y for s in splits if len(s.S)]
    if not xs:
        raise InputError("no supervised examples to warm up on")
    return np.concatenate(xs), np.concatenate(ys)


def strip_sealed(split: FoldSplit) -> FoldSplit:
    """Copy of ``split`` with every hidden label zeroed."""
    return replace(split, sealed=replace(split.sealed, y=np.zeros_like(split.sealed.y)))
