"""Experiment batteries: configuration, orchestration and report files.

A battery is a list of sequences sharing one protocol configuration. For
``car-like`` batteries (classification) one warm-up model is fitted on the
union of every sequence's supervised fold and cloned per sequence; for
``ccc-like`` batteries (regression) every sequence is warmed up on its own.

Output tree::

    OUT/manifest.json
    OUT/reports.json
    OUT/summary_table.csv
    OUT/sequences/<sequence_id>/<mode>/predictions.csv
    OUT/plots/*.svg
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import metrics, protocol, streamgen
from .errors import ConfigError, CSSLError
from .learners import TrainConfig
from .protocol import MODES, SelfTrainConfig
from .streamgen import CLASSIFICATION, REGRESSION, CsvSchema

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
REPORTS_SCHEMA = "cssl-reports/1"
BATTERIES = ("car-like", "ccc-like", "custom")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

CAR_LENGTH = 22500
CAR_FOLDS = (7500, 7500, 7500)
CAR_SUBFOLD = 60 * streamgen.FRAME_RATE  # one minute
CAR_PER_GROUP = 5
CCC_SUBFOLD = 100
CCC_SEQUENCES = (
    ("ccc-ucsd", 2000, (400, 800, 800), "contiguous"),
    ("ccc-mall", 2000, (400, 800, 800), "short-gap"),
    ("ccc-fdst", 750, (150, 300, 300), "long-gap"),
)

_TOP_KEYS = {"version", "battery", "kind", "seed", "output_dir", "workers", "modes",
             "feature_dim", "n_classes", "subfold_size", "class_filter", "shared_warmup",
             "sequences", "self_training", "warmup", "generator"}
_SEQ_KEYS = {"id", "preset", "length", "folds", "csv"}
_ST_KEYS = {"threshold", "epochs_per_session", "eval_mode", "learning_rate", "batch_size"}
_WARM_KEYS = {"learning_rate", "epochs", "batch_size"}
_CLS_GEN_KEYS = set(streamgen.PresetParams.__dataclass_fields__)
_REG_GEN_KEYS = set(streamgen.RegressionPresetParams.__dataclass_fields__)


def battery_defaults(battery: str) -> dict:
    """Fully populated default configuration for a battery kind."""
    if battery == "car-like":
        sequences = [
            {"id": f"car-{group}-{k}", "preset": group, "length": CAR_LENGTH,
             "folds": list(CAR_FOLDS)}
            for group in streamgen.GROUPS for k in range(CAR_PER_GROUP)
        ]
        return {
            "kind": CLASSIFICATION, "feature_dim": 16, "n_classes": 9,
            "subfold_size": CAR_SUBFOLD, "shared_warmup": True, "sequences": sequences,
            "self_training": {"threshold": 0.4, "epochs_per_session": 1,
                              "eval_mode": "post_update", "learning_rate": 0.01,
                              "batch_size": 64},
            "warmup": {"learning_rate": 0.1, "epochs": 5, "batch_size": 64},
            "generator": dict(vars(streamgen.PresetParams())),
        }
    if battery == "ccc-like":
        sequences = [{"id": sid, "preset": preset, "length": n, "folds": list(folds)}
                     for sid, n, folds, preset in CCC_SEQUENCES]
        return {
            "kind": REGRESSION, "feature_dim": 16, "n_classes": None,
            "subfold_size": CCC_SUBFOLD, "shared_warmup": False, "sequences": sequences,
            "self_training": {"threshold": 0.4, "epochs_per_session": 5,
                              "eval_mode": "post_update", "learning_rate": 0.001,
                              "batch_size": 32},
            "warmup": {"learning_rate": 0.01, "epochs": 100, "batch_size": 32},
            "generator": dict(vars(streamgen.RegressionPresetParams())),
        }
    return {"feature_dim": None, "n_classes": None, "subfold_size": None, "sequences": [],
            "self_training": {"threshold": 0.4, "eval_mode": "post_update",
                              "learning_rate": 0.01, "batch_size": 64},
            "warmup": {"learning_rate": 0.1, "epochs": 5, "batch_size": 64},
            "generator": {}}


@dataclass
class SequenceSpec:
    id: str
    length: Optional[int]
    folds: tuple
    preset: Optional[str] = None
    csv: Optional[str] = None


@dataclass
class ExperimentConfig:
    battery: str
    kind: str
    seed: int
    output_dir: str
    sequences: list
    feature_dim: Optional[int]
    n_classes: Optional[int]
    subfold_size: int
    self_training: SelfTrainConfig
    warmup: TrainConfig
    shared_warmup: bool
    generator: dict = field(default_factory=dict)
    modes: tuple = MODES
    workers: int = 1
    class_filter: str = "all"
    base_dir: str = "."

    def to_dict(self) -> dict:
        st = self.self_training
        return {
            "version": CONFIG_VERSION,
            "battery": self.battery,
            "kind": self.kind,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "modes": list(self.modes),
            "feature_dim": self.feature_dim,
            "n_classes": self.n_classes,
            "subfold_size": self.subfold_size,
            "class_filter": self.class_filter,
            "shared_warmup": self.shared_warmup,
            "sequences": [
                {k: v for k, v in (("id", s.id), ("preset", s.preset), ("length", s.length),
                                   ("folds", list(s.folds)), ("csv", s.csv)) if v is not None}
                for s in self.sequences
            ],
            "self_training": {"threshold": st.threshold,
                              "epochs_per_session": st.epochs_per_session,
                              "eval_mode": st.eval_mode, "learning_rate": st.learning_rate,
                              "batch_size": st.batch_size},
            "warmup": {"learning_rate": self.warmup.learning_rate,
                       "epochs": self.warmup.epochs, "batch_size": self.warmup.batch_size},
            "generator": dict(self.generator),
        }

    def config_hash(self) -> str:
        doc = self.to_dict()
        # where results go and how fast they are produced does not change them
        doc.pop("output_dir")
        doc.pop("workers")
        doc.pop("modes")
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


class ConfigErrors(ConfigError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _check_keys(doc, allowed, where, errors):
    for key in sorted(set(doc) - allowed):
        errors.append(f"{where}{key}: unknown key")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _merge(defaults: dict, given: Optional[dict]) -> dict:
    out = dict(defaults or {})
    out.update(given or {})
    return out


def normalize_config(raw: dict, base_dir=".") -> ExperimentConfig:
    """Resolve defaults and check every invariant; raise ``ConfigErrors``."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigErrors(["<root>: config must be a mapping"])
    _check_keys(raw, _TOP_KEYS, "", errors)
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        errors.append(f"version: unsupported config version {raw.get('version')!r}")
    battery = raw.get("battery")
    if battery not in BATTERIES:
        errors.append(f"battery: must be one of {', '.join(BATTERIES)}")
        raise ConfigErrors(errors)
    defaults = battery_defaults(battery)
    kind = raw.get("kind", defaults.get("kind"))
    if kind not in streamgen.KINDS:
        errors.append(f"kind: must be one of {', '.join(streamgen.KINDS)}")
        raise ConfigErrors(errors)
    if battery != "custom" and kind != defaults["kind"]:
        errors.append(f"kind: {battery} batteries are {defaults['kind']}")

    seed = raw.get("seed")
    if not _is_int(seed):
        errors.append("seed: required integer (no wall-clock default)")

    def pick(key, default=None):
        return raw.get(key, defaults.get(key, default))

    d = pick("feature_dim")
    C = pick("n_classes")
    subfold = pick("subfold_size")
    if battery != "custom" or d is not None:
        if not _is_int(d) or d < 1:
            errors.append("feature_dim: must be a positive integer")
    if kind == CLASSIFICATION and (not _is_int(C) or C < 2):
        errors.append("n_classes: must be an integer >= 2 for classification")
    if kind == REGRESSION and C is not None:
        errors.append("n_classes: not used for regression batteries")
    if not _is_int(subfold) or subfold < 1:
        errors.append("subfold_size: must be an integer >= 1")

    modes = raw.get("modes", list(MODES))
    if isinstance(modes, str):
        modes = [m.strip() for m in modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        errors.append(f"modes: must be a non-empty subset of {', '.join(MODES)}")
    workers = raw.get("workers", 1)
    if not _is_int(workers) or workers < 1:
        errors.append("workers: must be an integer >= 1")
    class_filter = raw.get("class_filter", "all")
    if class_filter not in ("all", "present_only"):
        errors.append("class_filter: must be 'all' or 'present_only'")
    shared = raw.get("shared_warmup", defaults.get("shared_warmup", kind == CLASSIFICATION))
    if not isinstance(shared, bool):
        errors.append("shared_warmup: must be true or false")

    st_raw = raw.get("self_training") or {}
    _check_keys(st_raw, _ST_KEYS, "self_training.", errors)
    st = _merge(defaults["self_training"], st_raw)
    st.setdefault("epochs_per_session", 1 if kind == CLASSIFICATION else 5)
    self_training = None
    try:
        self_training = SelfTrainConfig(
            float(st["threshold"]), int(st["epochs_per_session"]), st["eval_mode"],
            float(st["learning_rate"]), int(st["batch_size"]), 0)
    except (ConfigError, TypeError, ValueError) as exc:
        errors.append(f"self_training: {exc}")

    w_raw = raw.get("warmup") or {}
    _check_keys(w_raw, _WARM_KEYS, "warmup.", errors)
    w = _merge(defaults["warmup"], w_raw)
    warm = None
    try:
        warm = TrainConfig(float(w["learning_rate"]), int(w["epochs"]), int(w["batch_size"]), 0)
        if warm.learning_rate <= 0:
            errors.append("warmup.learning_rate: must be positive")
    except (CSSLError, TypeError, ValueError) as exc:
        errors.append(f"warmup: {exc}")

    g_raw = raw.get("generator") or {}
    gen_defaults = (vars(streamgen.PresetParams()) if kind == CLASSIFICATION
                    else vars(streamgen.RegressionPresetParams()))
    _check_keys(g_raw, _CLS_GEN_KEYS if kind == CLASSIFICATION else _REG_GEN_KEYS,
                "generator.", errors)
    generator = _merge(gen_defaults, g_raw)

    seq_raw = raw.get("sequences", defaults["sequences"])
    sequences = []
    if not isinstance(seq_raw, list) or not seq_raw:
        errors.append("sequences: must be a non-empty list")
        seq_raw = []
    seen = set()
    for i, s in enumerate(seq_raw):
        where = f"sequences[{i}]."
        if not isinstance(s, dict):
            errors.append(f"sequences[{i}]: must be a mapping")
            continue
        _check_keys(s, _SEQ_KEYS, where, errors)
        sid = s.get("id", f"seq-{i}")
        if not isinstance(sid, str) or not sid or "/" in sid:
            errors.append(f"{where}id: must be a non-empty string without '/'")
        elif sid in seen:
            errors.append(f"{where}id: duplicate id {sid!r}")
        seen.add(sid)
        preset, path, length = s.get("preset"), s.get("csv"), s.get("length")
        if (preset is None) == (path is None):
            errors.append(f"{where}: give exactly one of preset or csv")
        if preset is not None and preset not in streamgen.PRESETS:
            errors.append(f"{where}preset: must be one of {', '.join(streamgen.PRESETS)}")
        if preset is not None and (not _is_int(length) or length < 1):
            errors.append(f"{where}length: must be a positive integer")
        folds = s.get("folds")
        if (not isinstance(folds, (list, tuple)) or len(folds) != 3
                or not all(_is_int(f) and f >= 0 for f in folds)):
            errors.append(f"{where}folds: must be three nonnegative integers")
            folds = (0, 0, 0)
        elif length is not None and sum(folds) != length:
            errors.append(f"{where}folds: sizes {list(folds)} sum to {sum(folds)}, "
                          f"not the sequence length {length}")
        elif folds[0] == 0:
            errors.append(f"{where}folds: the supervised fold must be non-empty")
        if path is not None and not (Path(base_dir) / path).is_file():
            errors.append(f"{where}csv: file not found: {path}")
        sequences.append(SequenceSpec(sid, length, tuple(folds), preset, path))

    if errors:
        raise ConfigErrors(errors)
    return ExperimentConfig(
        battery=battery, kind=kind, seed=seed,
        output_dir=str(raw.get("output_dir", "runs/out")), sequences=sequences,
        feature_dim=d, n_classes=C, subfold_size=subfold, self_training=self_training,
        warmup=warm, shared_warmup=shared, generator=generator, modes=tuple(modes),
        workers=workers, class_filter=class_filter, base_dir=str(base_dir),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigErrors([f"<file>: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigErrors([f"<file>: not valid YAML: {exc}"]) from None
    return normalize_config(raw, base_dir=path.parent)


def validate_config(path):
    """``(ExperimentConfig, [])`` on success, ``(None, errors)`` otherwise."""
    try:
        return load_config(path), []
    except ConfigErrors as exc:
        return None, exc.errors


# -- sequence construction -----------------------------------------------------

def _sequence_seed(master: int, index: int) -> np.random.SeedSequence:
    # keyed by position so sequences can be built in any order or in parallel
    return np.random.SeedSequence(master, spawn_key=(index,))


def _shared_seed(master: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(2**31,))


def build_sequence(cfg: ExperimentConfig, index: int, base_means=None):
    spec = cfg.sequences[index]
    if spec.csv is not None:
        schema = CsvSchema(kind=cfg.kind, n_classes=cfg.n_classes, sequence_id=spec.id)
        seq = streamgen.load_sequence_csv(Path(cfg.base_dir) / spec.csv, schema)
        if cfg.feature_dim is not None and seq.d != cfg.feature_dim:
            raise ConfigError(f"{spec.id}: CSV has {seq.d} features, config says "
                              f"{cfg.feature_dim}")
        return seq
    # children: 0 schedule, 1 stream, 2 self-training, 3 warm-up
    schedule_seed, stream_seed = _sequence_seed(cfg.seed, index).spawn(4)[:2]
    s, v, _ = spec.folds
    bounds = tuple(b for b in (s, s + v) if 0 < b < spec.length)
    group = spec.preset if spec.preset in streamgen.GROUPS else None
    if cfg.kind == CLASSIFICATION:
        params = streamgen.PresetParams(**cfg.generator)
        schedule = streamgen.drift_preset(spec.preset, base_means, spec.length, bounds,
                                          schedule_seed, params)
        return streamgen.make_classification_stream(
            schedule, spec.length, cfg.feature_dim, cfg.n_classes, stream_seed,
            spec.id, group)
    params = streamgen.RegressionPresetParams(**cfg.generator)
    path = streamgen.regression_preset(spec.preset, cfg.feature_dim, spec.length, bounds,
                                       schedule_seed, params)
    return streamgen.make_regression_stream(path, params.noise_std, spec.length,
                                            cfg.feature_dim, stream_seed, spec.id, group)


def _base_means(cfg: ExperimentConfig):
    if cfg.kind != CLASSIFICATION or all(s.preset is None for s in cfg.sequences):
        return None
    spread = cfg.generator.get("class_spread", streamgen.PresetParams.class_spread)
    return streamgen.battery_class_means(cfg.n_classes, cfg.feature_dim, spread,
                                         _shared_seed(cfg.seed))


def build_split(cfg: ExperimentConfig, index: int, base_means=None):
    seq = build_sequence(cfg, index, base_means)
    return protocol.split_folds(seq, cfg.sequences[index].folds)


def build_splits(cfg: ExperimentConfig) -> list:
    base = _base_means(cfg)
    return [build_split(cfg, i, base) for i in range(len(cfg.sequences))]


def session_config(cfg: ExperimentConfig, index: int) -> SelfTrainConfig:
    seed = int(_sequence_seed(cfg.seed, index).spawn(4)[2].generate_state(1)[0])
    st = cfg.self_training
    return SelfTrainConfig(st.threshold, st.epochs_per_session, st.eval_mode,
                           st.learning_rate, st.batch_size, seed)


def warmup_config(cfg: ExperimentConfig, index: Optional[int] = None) -> TrainConfig:
    ss = _shared_seed(cfg.seed) if index is None else _sequence_seed(cfg.seed, index)
    seed = int(ss.spawn(4)[3].generate_state(1)[0])
    w = cfg.warmup
    return TrainConfig(w.learning_rate, w.epochs, w.batch_size, seed)


# -- per-sequence evaluation ---------------------------------------------------

def session_trace(result: protocol.ModeResult, truth: protocol.SealedLabels, kind: str,
                  subfold_size: int) -> list:
    """Per-subfold accuracy (or MAE) along the stream a mode updates on.

    ``sup-ft`` is traced over the V+T stream cut into subfolds of the same size.
    """
    lg = result.log
    if result.mode == "upd-V":
        keep = lg.fold == "V"
    elif result.mode == "upd-T":
        keep = lg.fold == "T"
    else:
        keep = np.ones(len(lg), dtype=bool)
    sizes = result.subfold_sizes
    if result.mode == "sup-ft":
        n = int(keep.sum())
        sizes = [min(subfold_size, n - s) for s in range(0, n, subfold_size)]
    pred = lg.prediction[keep]
    y = truth.y[keep]
    out, start = [], 0
    for size in sizes:
        p, t = pred[start:start + size], y[start:start + size]
        start += size
        if kind == CLASSIFICATION:
            out.append(np.count_nonzero(p == t) / size)
        else:
            out.append(metrics.mae(p, t))
    return out


def evaluate_sequence(split, warm, modes, st_cfg, subfold_size, kind, C, class_filter,
                      out_dir):
    """Run every mode on one sequence and write its prediction logs."""
    truth = split.sealed
    seq_dir = Path(out_dir) / "sequences" / split.sequence_id
    doc = {"group": split.S.group, "n_supervised": len(split.S), "n_V": len(split.V),
           "n_T": len(split.T), "modes": {}}
    for mode in modes:
        res = protocol.run_mode(split, warm, mode, st_cfg, subfold_size)
        lg = res.log.sorted()
        mode_dir = seq_dir / mode
        mode_dir.mkdir(parents=True, exist_ok=True)
        lg.to_csv(mode_dir / "predictions.csv")
        folds = metrics.fold_reports(lg, truth, kind, C, class_filter)
        doc["modes"][mode] = {
            "predictions": str(Path("sequences") / split.sequence_id / mode / "predictions.csv"),
            "folds": {f: r.to_dict() for f, r in folds.items()},
            "n_subfolds": len(res.subfold_sizes),
            "selected": [s.n_selected for s in res.sessions],
            "trace": session_trace(res, truth, kind, subfold_size),
        }
    return doc


def _evaluate_task(args):
    try:
        return args[0].sequence_id, evaluate_sequence(*args), None
    except CSSLError as exc:
        return args[0].sequence_id, None, f"{type(exc).__name__}: {exc}"


# -- battery -------------------------------------------------------------------

SUMMARY_CLS = ("precision", "recall", "f1")
DELTA_METRICS_CLS = ("accuracy", "precision_macro", "precision_weighted", "recall_macro",
                     "recall_weighted", "f1_macro", "f1_weighted")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunManifest:
    path: Path
    doc: dict

    @property
    def exit_code(self) -> int:
        return EXIT_OK if not self.doc.get("errors") else EXIT_RUNTIME


def battery_summary(seq_docs: dict, modes, kind, class_filter="all") -> dict:
    """Pooled and sequence-mean reports per mode and fold."""
    out = {}
    for mode in modes:
        out[mode] = {}
        for fold in protocol.FOLDS:
            reps = [metrics.Report.from_dict(d["modes"][mode]["folds"][fold])
                    for d in seq_docs.values() if fold in d["modes"][mode]["folds"]]
            if not reps:
                continue
            br = metrics.battery_report(reps, class_filter)
            out[mode][fold] = {"pooled": br.pooled.to_dict(),
                               "sequence_mean": br.sequence_mean,
                               "n_sequences": br.n_sequences}
    return out


def incremental_deltas(summary: dict, kind: str) -> dict:
    """Updated-minus-frozen differences against ``sup-ft`` for every updated mode."""
    if "sup-ft" not in summary:
        return {}
    selectors = DELTA_METRICS_CLS if kind == CLASSIFICATION else ("mae",)
    out = {}
    for mode, folds in summary.items():
        if mode == "sup-ft":
            continue
        out[mode] = {}
        for fold, doc in folds.items():
            base = metrics.Report.from_dict(summary["sup-ft"][fold]["pooled"])
            upd = metrics.Report.from_dict(doc["pooled"])
            out[mode][fold] = {m: vars(metrics.incremental_delta(upd, base, m))
                               for m in selectors}
    return out


def summary_rows(summary: dict, kind: str) -> tuple:
    """Header and rows of the summary table: one row per mode and aggregation."""
    if kind == CLASSIFICATION:
        cols = [f"{f}_{m}_{cw}" for f in protocol.FOLDS for m in SUMMARY_CLS
                for cw in ("C", "W")] + [f"{f}_accuracy" for f in protocol.FOLDS]
    else:
        cols = [f"{f}_mae" for f in protocol.FOLDS]
    header = ["mode", "aggregation"] + cols
    rows = []
    for mode, folds in summary.items():
        for agg in ("pooled", "sequence_mean"):
            row = [mode, agg]
            for col in cols:
                fold, rest = col.split("_", 1)
                key = rest.replace("_C", "_macro").replace("_W", "_weighted")
                doc = folds.get(fold, {}).get(agg, {})
                value = doc.get(key)
                row.append("" if value is None else repr(float(value)))
            rows.append(row)
    return header, rows


def run_battery(cfg: ExperimentConfig, modes=None, out_dir=None, workers=None,
                plots: bool = True) -> RunManifest:
    modes = tuple(m for m in MODES if m in (modes or cfg.modes))
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "battery": cfg.battery,
        "modes": list(modes),
        "sequences": {s.id: {m: str(Path("sequences") / s.id / m / "predictions.csv")
                             for m in modes} for s in cfg.sequences},
        "outputs": {"reports": "reports.json", "summary": "summary_table.csv",
                    "plots": "plots"},
        "status": "running",
        "errors": {},
        "timing": {},
    }
    manifest_path = out / "manifest.json"
    _write_json(manifest_path, manifest)
    t_start = time.perf_counter()

    errors = {}
    base = _base_means(cfg)
    built = []
    for i, spec in enumerate(cfg.sequences):
        try:
            built.append((i, build_split(cfg, i, base)))
        except CSSLError as exc:
            errors[spec.id] = f"{type(exc).__name__}: {exc}"
            log.error("sequence %s failed: %s", spec.id, errors[spec.id])
    t_built = time.perf_counter()
    if not built:
        warms = []
    elif cfg.shared_warmup:
        x, y = protocol.union_supervised([sp for _, sp in built])
        shared = protocol.warm_up(x, y, cfg.kind, built[0][1].S.d, cfg.n_classes,
                                  warmup_config(cfg))
        warms = [shared.clone() for _ in built]
    else:
        warms = [protocol.warm_up(sp.S.x, sp.S.y, cfg.kind, sp.S.d, cfg.n_classes,
                                  warmup_config(cfg, i))
                 for i, sp in built]
    t_warm = time.perf_counter()

    tasks = [(sp, warm, modes, session_config(cfg, i), cfg.subfold_size, cfg.kind,
              cfg.n_classes, cfg.class_filter, str(out)) for (i, sp), warm in zip(built, warms)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_task, tasks))
    else:
        results = [_evaluate_task(t) for t in tasks]
    seq_docs = {}
    for sid, doc, err in results:
        if err is None:
            seq_docs[sid] = doc
        else:
            errors[sid] = err
            log.error("sequence %s failed: %s", sid, err)
    t_eval = time.perf_counter()

    summary = battery_summary(seq_docs, modes, cfg.kind, cfg.class_filter) if seq_docs else {}
    reports = {
        "schema": REPORTS_SCHEMA,
        "battery": cfg.battery,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": manifest["config_hash"],
        "modes": list(modes),
        "n_classes": cfg.n_classes,
        "subfold_size": cfg.subfold_size,
        "sequences": seq_docs,
        "summary": summary,
        "deltas": incremental_deltas(summary, cfg.kind),
        "errors": errors,
    }
    _write_json(out / "reports.json", reports)
    header, rows = summary_rows(summary, cfg.kind)
    with open(out / "summary_table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    plot_files = []
    if plots:
        from .plotting import emit_plots
        plot_files = [str(p.relative_to(out)) for p in emit_plots(reports, out / "plots")]
    t_end = time.perf_counter()

    manifest["status"] = "failed" if errors else "complete"
    manifest["errors"] = errors
    manifest["plots"] = plot_files
    manifest["timing"] = {"generate_s": t_built - t_start, "warmup_s": t_warm - t_built,
                          "evaluate_s": t_eval - t_warm, "report_s": t_end - t_eval,
                          "total_s": t_end - t_start}
    _write_json(manifest_path, manifest)
    return RunManifest(manifest_path, manifest)


def with_overrides(cfg: ExperimentConfig, seed=None, out_dir=None, workers=None,
                   modes=None) -> ExperimentConfig:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg.seed = int(seed)
    if out_dir is not None:
        cfg.output_dir = str(out_dir)
    if workers is not None:
        cfg.workers = int(workers)
    if modes is not None:
        bad = [m for m in modes if m not in MODES]
        if bad or not modes:
            raise ConfigErrors([f"modes: unknown mode(s) {', '.join(bad) or '<empty>'}"])
        cfg.modes = tuple(modes)
    return cfg


def default_config(battery: str, seed: int = 0, output_dir: str = "runs/out",
                   **overrides) -> ExperimentConfig:
    raw = {"battery": battery, "seed": seed, "output_dir": output_dir}
    raw.update(overrides)
    return normalize_config(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
