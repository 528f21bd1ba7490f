"""Synthetic drifting streams, density-map ground truth and CSV ingestion.

Classification streams draw a class from fixed priors at every time step and
a feature vector from an isotropic Gaussian whose class mean moves with a
constant velocity and jumps at scheduled times. Regression streams draw
standard Gaussian features and a linear target whose weights follow the same
drift structure.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence as Seq

import numpy as np

from .errors import ConfigError, InputError, ParseError, SchemaError

CLASSIFICATION = "classification"
REGRESSION = "regression"
KINDS = (CLASSIFICATION, REGRESSION)

GROUPS = ("contiguous", "short-gap", "long-gap")
PRESETS = ("stationary",) + GROUPS

FRAME_RATE = 25  # CAR-like geometry assumes 25 fps: 5 min = 5 * 60 * 25 frames


@dataclass(frozen=True)
class Example:
    t: int
    x: np.ndarray
    y: object
    sequence_id: str


@dataclass
class Sequence:
    """An ordered stream of examples stored column-wise.

    ``t`` runs ``t0, t0+1, ...``; generated and loaded sequences start at 0,
    fold views keep the time index of their parent stream.
    """

    x: np.ndarray
    y: Optional[np.ndarray]
    kind: str = CLASSIFICATION
    n_classes: Optional[int] = None
    sequence_id: str = "seq"
    group: Optional[str] = None
    t0: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise InputError("a sequence needs a non-empty (n, d) feature array")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown sequence kind {self.kind!r}")
        if self.group is not None and self.group not in GROUPS:
            raise ConfigError(f"unknown drift group {self.group!r}")
        if self.y is not None:
            self.y = np.asarray(self.y)
            if self.y.shape != (len(self.x),):
                raise InputError("labels must be one per example")
            if self.kind == CLASSIFICATION:
                if self.n_classes is None:
                    raise ConfigError("classification sequences need n_classes")
                if not np.issubdtype(self.y.dtype, np.integer):
                    raise InputError("class labels must be integers")
                if self.y.min() < 0 or self.y.max() >= self.n_classes:
                    raise InputError(f"class labels must lie in [0, {self.n_classes})")
            else:
                self.y = self.y.astype(float)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.t0, self.t0 + len(self.x))

    @property
    def labelled(self) -> bool:
        return self.y is not None

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            y = None if self.y is None else self.y[i].item()
            yield Example(self.t0 + i, self.x[i], y, self.sequence_id)

    @property
    def examples(self) -> list:
        return list(self)

    def slice(self, start: int, stop: int, keep_labels: bool = True) -> "Sequence":
        y = self.y[start:stop] if (keep_labels and self.y is not None) else None
        return Sequence(
            self.x[start:stop], y, self.kind, self.n_classes,
            self.sequence_id, self.group, self.t0 + start,
        )


@dataclass
class DriftSchedule:
    """Time-varying class-conditional Gaussian process.

    The mean of class ``c`` at time ``t`` is
    ``base_means[c] + velocities[c] * t + sum(delta[c] for (tj, delta) in jumps if tj <= t)``.
    """

    base_means: np.ndarray
    velocities: np.ndarray
    covariance_scale: float
    priors: np.ndarray
    jumps: list = field(default_factory=list)

    def __post_init__(self):
        self.base_means = np.asarray(self.base_means, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.priors = np.asarray(self.priors, dtype=float)
        if self.base_means.ndim != 2:
            raise ConfigError("base_means must be a (C, d) array")
        if self.velocities.shape != self.base_means.shape:
            raise ConfigError("velocities must match base_means in shape")
        if self.priors.shape != (self.base_means.shape[0],):
            raise ConfigError("priors must hold one probability per class")
        if np.any(self.priors < 0) or abs(self.priors.sum() - 1.0) > 1e-9:
            raise ConfigError("priors must be nonnegative and sum to 1")
        if not self.covariance_scale > 0:
            raise ConfigError("covariance_scale must be positive")
        jumps = []
        for tj, delta in self.jumps:
            delta = np.asarray(delta, dtype=float)
            if delta.shape != self.base_means.shape:
                raise ConfigError("jump offsets must match base_means in shape")
            jumps.append((int(tj), delta))
        if any(a[0] > b[0] for a, b in zip(jumps, jumps[1:])):
            raise ConfigError("jumps must be sorted by time")
        self.jumps = jumps

    @property
    def n_classes(self) -> int:
        return self.base_means.shape[0]

    @property
    def d(self) -> int:
        return self.base_means.shape[1]

    def class_means(self, t: np.ndarray, classes: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        offset = np.zeros((len(t), self.d))
        for tj, delta in self.jumps:
            hit = t >= tj
            offset[hit] += delta[classes[hit]]
        return self.base_means[classes] + self.velocities[classes] * t[:, None] + offset


def make_classification_stream(
    schedule: DriftSchedule, length: int, d: int, C: int, seed,
    sequence_id: str = "seq", group: Optional[str] = None,
) -> Sequence:
    if length <= 0:
        raise ConfigError("length must be positive")
    if schedule.d != d or schedule.n_classes != C:
        raise ConfigError(
            f"schedule is {schedule.n_classes}x{schedule.d}, expected {C}x{d}")
    for tj, _ in schedule.jumps:
        if not 0 <= tj < length:
            raise ConfigError(f"jump at t={tj} outside a stream of length {length}")
    rng = np.random.default_rng(seed)
    y = rng.choice(C, size=length, p=schedule.priors)
    noise = rng.standard_normal((length, d))
    t = np.arange(length)
    x = schedule.class_means(t, y) + math.sqrt(schedule.covariance_scale) * noise
    return Sequence(x, y, CLASSIFICATION, C, sequence_id, group)


@dataclass
class WeightPath:
    """Linear target ``y = w(t).x + b(t)`` with continuous drift and jumps.

    ``jumps`` holds ``(t, delta_w, delta_b)`` triples sorted by time.
    """

    w0: np.ndarray
    b0: float = 0.0
    velocity: Optional[np.ndarray] = None
    bias_velocity: float = 0.0
    jumps: list = field(default_factory=list)

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=float)
        if self.w0.ndim != 1:
            raise ConfigError("w0 must be a vector")
        if self.velocity is None:
            self.velocity = np.zeros_like(self.w0)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.velocity.shape != self.w0.shape:
            raise ConfigError("velocity must match w0 in shape")
        jumps = []
        for tj, dw, db in self.jumps:
            dw = np.asarray(dw, dtype=float)
            if dw.shape != self.w0.shape:
                raise ConfigError("jump weight offsets must match w0 in shape")
            jumps.append((int(tj), dw, float(db)))
        if any(a[0] > b[0] for a, b in zip(jumps, jumps[1:])):
            raise ConfigError("jumps must be sorted by time")
        self.jumps = jumps

    @property
    def d(self) -> int:
        return len(self.w0)

    def at(self, t):
        """Weights ``(n, d)`` and biases ``(n,)`` at the time indices ``t``."""
        t = np.asarray(t, dtype=float)
        w_off = np.zeros((len(t), self.d))
        b_off = np.zeros(len(t))
        for tj, dw, db in self.jumps:
            hit = t >= tj
            w_off[hit] += dw
            b_off[hit] += db
        w = self.w0 + self.velocity * t[:, None] + w_off
        b = self.b0 + self.bias_velocity * t + b_off
        return w, b


def make_regression_stream(
    weight_path: WeightPath, noise_std: float, length: int, d: int, seed,
    sequence_id: str = "seq", group: Optional[str] = None,
) -> Sequence:
    if length <= 0:
        raise ConfigError("length must be positive")
    if noise_std < 0:
        raise ConfigError("noise_std must be nonnegative")
    if weight_path.d != d:
        raise ConfigError(f"weight path has dimension {weight_path.d}, expected {d}")
    for tj, _, _ in weight_path.jumps:
        if not 0 <= tj < length:
            raise ConfigError(f"jump at t={tj} outside a stream of length {length}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((length, d))
    eps = rng.standard_normal(length) * noise_std
    w, b = weight_path.at(np.arange(length))
    y = np.einsum("ij,ij->i", w, x) + b + eps
    return Sequence(x, y, REGRESSION, None, sequence_id, group)


# -- drift presets -----------------------------------------------------------

@dataclass
class PresetParams:
    """Magnitudes behind the drift presets.

    These are config defaults for the synthetic analogue, in units of the
    class noise standard deviation.
    """

    class_spread: float = 0.65
    sequence_shift: float = 0.25
    drift_total: float = 1.5
    short_jump: float = 1.0
    long_jump: float = 3.0
    covariance_scale: float = 1.0
    background_prior: float = 0.3


def background_priors(C: int, background: float) -> np.ndarray:
    if C == 1:
        return np.ones(1)
    priors = np.full(C, (1.0 - background) / (C - 1))
    priors[0] = background
    return priors / priors.sum()


def battery_class_means(C: int, d: int, spread: float, seed) -> np.ndarray:
    """Class centres shared by every sequence of a battery."""
    rng = np.random.default_rng(seed)
    return spread * rng.standard_normal((C, d))


def _unit_rows(rng, shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def drift_preset(
    preset: str, base_means: np.ndarray, length: int, fold_bounds: Seq[int],
    seed, params: Optional[PresetParams] = None,
) -> DriftSchedule:
    """Schedule for one of the drift regimes.

    ``stationary`` has no drift; ``contiguous`` drifts continuously;
    ``short-gap`` adds a per-class jump of size ``short_jump`` at every fold
    boundary in ``fold_bounds``; ``long-gap`` uses ``short_jump`` at the first
    boundary and ``long_jump`` at the later ones, so the largest shift
    separates the last two folds.
    A small per-sequence shift of the shared class centres is applied in all
    presets.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown drift preset {preset!r}")
    p = params or PresetParams()
    base_means = np.asarray(base_means, dtype=float)
    C, d = base_means.shape
    rng = np.random.default_rng(seed)
    means = base_means + p.sequence_shift * _unit_rows(rng, (C, d))
    velocities = np.zeros((C, d))
    jumps = []
    if preset != "stationary":
        velocities = p.drift_total / length * _unit_rows(rng, (C, d))
    if preset in ("short-gap", "long-gap"):
        for k, tb in enumerate(fold_bounds):
            size = p.long_jump if preset == "long-gap" and k > 0 else p.short_jump
            jumps.append((int(tb), size * _unit_rows(rng, (C, d))))
    return DriftSchedule(
        means, velocities, p.covariance_scale,
        background_priors(C, p.background_prior), jumps,
    )


@dataclass
class RegressionPresetParams:
    base_count: float = 20.0
    weight_scale: float = 3.0
    drift_total: float = 1.0
    short_jump: float = 1.0
    long_jump: float = 3.0
    count_jump: float = 4.0
    noise_std: float = 1.0


def regression_preset(
    preset: str, d: int, length: int, fold_bounds: Seq[int], seed,
    params: Optional[RegressionPresetParams] = None,
) -> WeightPath:
    """Weight path for a crowd-count-like regression stream.

    Jumps follow the same boundary rule as ``drift_preset``.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown drift preset {preset!r}")
    p = params or RegressionPresetParams()
    rng = np.random.default_rng(seed)
    w0 = p.weight_scale * rng.standard_normal(d) / math.sqrt(d)
    velocity = np.zeros(d)
    jumps = []
    if preset != "stationary":
        direction = rng.standard_normal(d)
        velocity = p.drift_total / length * direction / np.linalg.norm(direction)
    if preset in ("short-gap", "long-gap"):
        for k, tb in enumerate(fold_bounds):
            size = p.long_jump if preset == "long-gap" and k > 0 else p.short_jump
            dw = rng.standard_normal(d)
            jumps.append((int(tb), size * dw / np.linalg.norm(dw),
                          p.count_jump * size * rng.choice([-1.0, 1.0])))
    return WeightPath(w0, p.base_count, velocity, 0.0, jumps)


# -- density maps --------------------------------------------------------------

@dataclass
class PointAnnotation:
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def check_bounds(self, H: int, W: int):
        r, c = self.points[:, 0], self.points[:, 1]
        bad = (r < 0) | (r >= H) | (c < 0) | (c >= W) | ~np.isfinite(r) | ~np.isfinite(c)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InputError(f"point {tuple(self.points[i])} lies outside a {H}x{W} grid")


@dataclass
class DensityGrid:
    values: np.ndarray
    cell_area: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InputError("density values must be a 2-D grid")
        if np.any(self.values < 0):
            raise InputError("density values must be nonnegative")
        if not self.cell_area > 0:
            raise InputError("cell_area must be positive")


TRUNCATE = 4.0


def density_map_from_points(annotation, sigma: float, H: int, W: int) -> DensityGrid:
    """Place one unit-mass Gaussian per point, truncated at 4 sigma.

    Each kernel is evaluated at cell centres ``(i + 0.5, j + 0.5)`` inside the
    truncation window and renormalised over the cells that fall in the grid,
    so every point contributes exactly one unit of mass.
    """
    if not sigma > 0:
        raise InputError("sigma must be positive")
    if H <= 0 or W <= 0:
        raise InputError("grid dimensions must be positive")
    if not isinstance(annotation, PointAnnotation):
        annotation = PointAnnotation(annotation)
    annotation.check_bounds(H, W)
    values = np.zeros((H, W))
    radius = TRUNCATE * sigma
    for r, c in annotation.points:
        r0, r1 = max(int(math.floor(r - radius)), 0), min(int(math.floor(r + radius)), H - 1)
        c0, c1 = max(int(math.floor(c - radius)), 0), min(int(math.floor(c + radius)), W - 1)
        dr = np.arange(r0, r1 + 1) + 0.5 - r
        dc = np.arange(c0, c1 + 1) + 0.5 - c
        kernel = np.exp(-(dr[:, None] ** 2 + dc[None, :] ** 2) / (2 * sigma ** 2))
        kernel[(dr[:, None] ** 2 + dc[None, :] ** 2) > radius ** 2] = 0.0
        total = kernel.sum()
        if total > 0:
            values[r0:r1 + 1, c0:c1 + 1] += kernel / total
        else:
            # kernel narrower than a cell
            values[int(r), int(c)] += 1.0
    return DensityGrid(values)


def count_from_density(grid: DensityGrid) -> float:
    return float(grid.values.sum())


# -- CSV ingestion ---------------------------------------------------------------

@dataclass
class CsvSchema:
    """Column mapping for ``load_sequence_csv``.

    ``feature_columns=None`` picks up ``x0, x1, ...`` from the header;
    ``label_column`` is used only when present in the header.
    """

    time_column: str = "t"
    feature_columns: Optional[list] = None
    label_column: Optional[str] = "y"
    kind: str = CLASSIFICATION
    n_classes: Optional[int] = None
    sequence_id: Optional[str] = None
    group: Optional[str] = None


def _feature_columns(header):
    cols = []
    while f"x{len(cols)}" in header:
        cols.append(f"x{len(cols)}")
    return cols


def load_sequence_csv(path, schema: Optional[CsvSchema] = None) -> Sequence:
    schema = schema or CsvSchema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        features = schema.feature_columns or _feature_columns(header)
        if not features:
            raise SchemaError("no feature columns found (expected x0, x1, ...)")
        missing = [c for c in [schema.time_column, *features] if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        t_idx = header.index(schema.time_column)
        f_idx = [header.index(c) for c in features]
        has_label = schema.label_column is not None and schema.label_column in header
        y_idx = header.index(schema.label_column) if has_label else None

        ts, xs, ys = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"row {row_no}: expected {len(header)} columns, got {len(row)}")
            try:
                ts.append(int(float(row[t_idx])))
                xs.append([float(row[i]) for i in f_idx])
                if has_label:
                    if schema.kind == CLASSIFICATION:
                        v = float(row[y_idx])
                        if v != int(v):
                            raise ValueError(f"non-integer class label {row[y_idx]!r}")
                        ys.append(int(v))
                    else:
                        ys.append(float(row[y_idx]))
            except ValueError as exc:
                raise ParseError(str(exc), row=row_no) from None
            if len(ts) > 1 and ts[-1] <= ts[-2]:
                raise ParseError("rows are not ordered by time", row=row_no)
    if not xs:
        raise ParseError("no data rows", row=2)
    y = None
    if has_label:
        y = np.array(ys, dtype=int if schema.kind == CLASSIFICATION else float)
    n_classes = schema.n_classes
    if schema.kind == CLASSIFICATION and n_classes is None and y is not None:
        n_classes = int(y.max()) + 1
    return Sequence(
        np.array(xs, dtype=float), y, schema.kind, n_classes,
        schema.sequence_id or path.stem, schema.group,
    )


def save_sequence_csv(seq: Sequence, path) -> None:
    header = ["t"] + [f"x{j}" for j in range(seq.d)]
    if seq.y is not None:
        header.append("y")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(seq)):
            row = [str(i)] + [repr(float(v)) for v in seq.x[i]]
            if seq.y is not None:
                row.append(str(int(seq.y[i])) if seq.kind == CLASSIFICATION
                           else repr(float(seq.y[i])))
            w.writerow(row)
