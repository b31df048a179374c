"""Regret-versus-cost figures as deterministic SVG."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

log = logging.getLogger(__name__)


def read_aggregate(path) -> tuple[list[dict], bool]:
    """Rows of an aggregate CSV and whether a confidence column is present."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        rows = list(reader)
    missing = {"mode", "checkpoint_cost", "mean_regret"} - set(fields)
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    return rows, "ci95_halfwidth" in fields


def _float(s):
    try:
        v = float(s)
    except (TypeError, ValueError):
        return math.nan
    return v


def plot_regret(rows: list[dict], out_path, with_bands: bool = True, title: str | None = None) -> Path:
    if not rows:
        raise ValueError("no rows to plot")
    if not with_bands:
        log.warning("no ci95_halfwidth column; drawing curves without confidence bands")
    curves: dict = {}
    for r in rows:
        label = r["mode"] if "family" not in r else f"{r['mode']} (family {r['family']})"
        curves.setdefault(label, []).append((_float(r["checkpoint_cost"]), _float(r["mean_regret"]),
                                             _float(r.get("ci95_halfwidth"))))
    plt.rcParams["svg.hashsalt"] = "cmokg"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label in curves:
        pts = sorted(curves[label])
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        (line,) = ax.plot(x, y, marker="o", markersize=3, label=label)
        if with_bands:
            hw = [p[2] for p in pts]
            lo = [a - (b if math.isfinite(b) else 0.0) for a, b in zip(y, hw)]
            hi = [a + (b if math.isfinite(b) else 0.0) for a, b in zip(y, hw)]
            ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("cumulative cost")
    ax.set_ylabel("mean Bayesian regret")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
