"""Report artifacts: JSON/CSV writers and matplotlib figures rendered to files
alongside the delimited outputs."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .evaluate import EvalReport, SWEEP_ORDER

REPORT_VERSION = 1


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path, payload: dict, config: dict | None = None) -> None:
    """Write a versioned JSON artifact carrying its resolved config."""
    document = {"version": REPORT_VERSION}
    if config is not None:
        document["config"] = _jsonable(config)
    document.update(_jsonable(payload))
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def report_payload(report: EvalReport) -> dict:
    payload = asdict(report)
    payload["roc"] = report.roc.tolist()
    return payload


def roc_csv_text(roc: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fpr", "tpr"])
    for fpr, tpr in np.asarray(roc):
        writer.writerow([repr(float(fpr)), repr(float(tpr))])
    return buf.getvalue()


def write_roc_csv(path, roc: np.ndarray) -> None:
    Path(path).write_text(roc_csv_text(roc), encoding="utf-8")


def save_roc_figure(path, roc: np.ndarray, auc: float, title: str = "") -> None:
    roc = np.asarray(roc)
    fig = Figure(figsize=(4.5, 4.2))
    ax = fig.subplots()
    ax.plot(roc[:, 0], roc[:, 1], drawstyle="steps-post", color="tab:blue",
            label=f"AUC = {auc:.4f}")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def save_search_figure(path, trace, grids) -> None:
    """One panel per swept parameter: test accuracy against candidate value.

    The trace is ordered sweep by sweep, so the grids give the segmentation.
    """
    fig = Figure(figsize=(2.8 * len(SWEEP_ORDER), 2.8))
    axes = np.atleast_1d(fig.subplots(1, len(SWEEP_ORDER)))
    cursor = 0
    for ax, name in zip(axes, SWEEP_ORDER):
        width = len(sorted(set(getattr(grids, name))))
        segment = trace[cursor:cursor + width]
        cursor += width
        points = sorted((getattr(params, name), acc) for params, acc in segment)
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker="o", color="tab:blue")
        ax.set_xlabel(name)
        ax.set_ylabel("accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def save_timing_figure(path, per_cloud, mean_seconds: float) -> None:
    per_cloud = np.asarray(per_cloud, dtype=np.float64)
    fig = Figure(figsize=(4.8, 3.2))
    ax = fig.subplots()
    ax.hist(per_cloud, bins=min(20, max(3, len(per_cloud))), color="tab:blue",
            alpha=0.8)
    ax.axvline(mean_seconds, color="tab:red", ls="--",
               label=f"mean = {mean_seconds:.3f} s")
    ax.set_xlabel("seconds per cloud")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
