"""Figures rendered from ``metrics.csv`` files (Agg backend, PNG output)."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import MalformedFile  # noqa: E402
from .metrics import CSV_COLUMNS  # noqa: E402

FIGURES = ("fin_bound.png", "f1.png", "hssr.png", "threshold.png")

_STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def read_metrics(path) -> dict[str, np.ndarray]:
    """Columns of a metrics CSV as float arrays keyed by header name."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise MalformedFile(path, 0, f"unexpected header {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise MalformedFile(path, lineno, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            rows.append([float(x) for x in row])
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {name: data[:, k] for k, name in enumerate(CSV_COLUMNS)}


def _finish(fig, ax, path: Path, ylabel: str) -> Path:
    ax.set_xlabel("round")
    ax.set_ylabel(ylabel)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render(runs: dict[str, dict[str, np.ndarray]], out_dir) -> list[Path]:
    """Write the four standard figures for one or more labelled runs into ``out_dir``."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out_dir}")
    written = []
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, m in runs.items():
            line, = ax.plot(m["round"], m["f_in_out"], label=f"{label} f_in")
            ax.plot(m["round"], m["B_t"], ls="--", color=line.get_color(), label=f"{label} B(t)")
        ax.set_ylim(0, 1)
        written.append(_finish(fig, ax, out_dir / "fin_bound.png", "Byzantine share of views"))

        fig, ax = plt.subplots()
        for label, m in runs.items():
            line, = ax.plot(m["round"], m["f1_mean"], label=label)
            ax.fill_between(m["round"], m["f1_mean"] - m["f1_std"], m["f1_mean"] + m["f1_std"],
                            color=line.get_color(), alpha=0.2, lw=0)
        ax.set_ylim(0, 1)
        written.append(_finish(fig, ax, out_dir / "f1.png", "honest macro F1"))

        fig, ax = plt.subplots()
        for label, m in runs.items():
            ax.plot(m["round"], m["hssr"], label=label)
        ax.set_ylim(0, 1.02)
        written.append(_finish(fig, ax, out_dir / "hssr.png", "HSSR"))

        fig, ax = plt.subplots()
        for label, m in runs.items():
            ax.step(m["round"], m["b_t"], where="post", label=label)
        written.append(_finish(fig, ax, out_dir / "threshold.png", "filtering threshold b"))
    return written


def report(run_dirs, out_dir=None) -> list[Path]:
    """Render figures for the runs in ``run_dirs`` (each holding a ``metrics.csv``)."""
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("no run directory given")
    runs = {}
    for d in run_dirs:
        csv_path = d / "metrics.csv"
        if not csv_path.is_file():
            raise FileNotFoundError(f"no metrics.csv in {d}")
        label = d.resolve().name or str(d)
        runs[str(d) if label in runs else label] = read_metrics(csv_path)
    return render(runs, run_dirs[0] if out_dir is None else out_dir)
