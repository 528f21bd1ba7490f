"""SVG figures for battery reports.

Figures are built with the object-oriented matplotlib API (no pyplot state)
and written as self-contained SVG with text kept as text and a fixed hash
salt, so identical reports give byte-identical files.
"""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

log = logging.getLogger(__name__)

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.fonttype": "none",
    "svg.hashsalt": "cssl",
}

MODE_COLORS = {
    "sup-ft": "#4d4d4d",
    "upd-V": "#1b9e77",
    "upd-T": "#d95f02",
    "upd-V+T": "#7570b3",
}

CLS_BARS = (("accuracy", "acc"), ("precision_macro", "P (C)"), ("precision_weighted", "P (W)"),
            ("recall_macro", "R (C)"), ("recall_weighted", "R (W)"), ("f1_macro", "F1 (C)"),
            ("f1_weighted", "F1 (W)"))


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def summary_figure(reports: dict) -> Figure:
    """Grouped bars: metric on x, one bar per mode, one panel per fold."""
    summary = reports["summary"]
    modes = [m for m in reports["modes"] if m in summary]
    folds = [f for f in ("V", "T") if any(f in summary[m] for m in modes)]
    bars = CLS_BARS if reports["kind"] == "classification" else (("mae", "MAE"),)
    fig = Figure(figsize=(3.2 + 0.9 * len(bars), 2.8))
    axes = fig.subplots(1, len(folds), squeeze=False)[0]
    width = 0.8 / max(len(modes), 1)
    for ax, fold in zip(axes, folds):
        for k, mode in enumerate(modes):
            doc = summary[mode].get(fold, {}).get("pooled", {})
            vals = [doc.get(key) or 0.0 for key, _ in bars]
            xs = [i + (k - (len(modes) - 1) / 2) * width for i in range(len(bars))]
            ax.bar(xs, vals, width, label=mode, color=MODE_COLORS.get(mode))
        ax.set_xticks(range(len(bars)))
        ax.set_xticklabels([label for _, label in bars])
        ax.set_title(f"{reports['battery']} - fold {fold}")
        if reports["kind"] == "classification":
            ax.set_ylim(0, 1)
    axes[0].legend(frameon=False)
    fig.tight_layout()
    return fig


def trace_figure(seq_id: str, seq_doc: dict, kind: str) -> Figure:
    """Per-subfold accuracy (or MAE) for every mode of one sequence."""
    fig = Figure(figsize=(4.5, 2.8))
    ax = fig.subplots()
    for mode, doc in seq_doc["modes"].items():
        trace = doc["trace"]
        ax.plot(range(len(trace)), trace, marker="o", ms=3, label=mode,
                color=MODE_COLORS.get(mode))
    ax.set_xlabel("session (sub-fold)")
    ax.set_ylabel("accuracy" if kind == "classification" else "MAE")
    ax.set_title(seq_id)
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def emit_plots(reports, out_dir) -> list:
    """Write ``summary.svg`` and one ``trace_<sequence>.svg`` per sequence.

    ``reports`` is a reports document or a list of them (one summary file per
    battery). Failures are logged and skipped.
    """
    docs = reports if isinstance(reports, list) else [reports]
    out_dir = Path(out_dir)
    written = []
    with matplotlib.rc_context(STYLE):
        for i, doc in enumerate(docs):
            suffix = "" if len(docs) == 1 else f"_{i}"
            try:
                if doc.get("summary"):
                    written.append(_save(summary_figure(doc), out_dir / f"summary{suffix}.svg"))
                for sid in sorted(doc.get("sequences", {})):
                    fig = trace_figure(sid, doc["sequences"][sid], doc["kind"])
                    written.append(_save(fig, out_dir / f"trace{suffix}_{sid}.svg"))
            except Exception as exc:  # plotting must never fail a run
                log.warning("plotting failed: %s", exc)
    return written
