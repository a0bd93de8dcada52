"""Figure rendering for finished run directories.

Renders whatever the run produced: boundary snapshots on top of the
container, the Q-radius branch diagram colored by solution type, and the
diagnostics time series (moment drift and nondegeneracy margin). Files
land in <run>/figures next to the plot CSVs emitted by the CLI.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cli import emit_plot_data
from .curves import BoundaryCurve

KIND_COLORS = {
    "Elliptic": "tab:blue",
    "Hyperbolic": "tab:red",
    "Parabolic": "tab:purple",
    "NoConvergence": "0.6",
}


def _read_csv(path: Path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def render_curves_figure(run_dir: Path) -> Path | None:
    state_files = sorted((run_dir / "states").glob("*.json"))
    if not state_files:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    config = json.loads((run_dir / "config-echo.json").read_text())
    container = config.get("container", "unit_disk")
    theta = np.linspace(0.0, 2.0 * np.pi, 361)
    if container == "unit_disk":
        ax.plot(np.cos(theta), np.sin(theta), "k-", lw=1.2, label="container")
    else:
        wall = BoundaryCurve.from_dict(container).points(theta)
        ax.plot(wall[:, 0], wall[:, 1], "k-", lw=1.2, label="container")

    cmap = plt.get_cmap("viridis")
    n = len(state_files)
    for i, sf in enumerate(state_files):
        record = json.loads(sf.read_text())
        pts = BoundaryCurve.from_dict(record["curve"]).points(theta)
        color = cmap(i / max(n - 1, 1))
        label = None
        if i == 0:
            label = f"t = {record['t']:.3g}"
        elif i == n - 1:
            label = f"t = {record['t']:.3g}"
        ax.plot(pts[:, 0], pts[:, 1], color=color, lw=0.9, label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title("free boundary snapshots")
    ax.legend(loc="upper right", fontsize=8)
    out = run_dir / "figures" / "curves.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def render_branch_figure(run_dir: Path) -> Path | None:
    path = run_dir / "branch.csv"
    if not path.exists():
        return None
    rows = _read_csv(path)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    seen = set()
    for row in rows:
        kind = row["kind"]
        r = float(row["equivalent_radius"]) if row["equivalent_radius"] != "nan" else np.nan
        label = kind if kind not in seen else None
        seen.add(kind)
        if np.isnan(r):
            ax.axvline(float(row["Q"]), color=KIND_COLORS[kind], ls=":", lw=0.8, label=label)
        else:
            ax.plot(float(row["Q"]), r, "o", color=KIND_COLORS.get(kind, "k"), label=label)
    ax.set_xlabel("Q")
    ax.set_ylabel("equivalent radius")
    ax.set_title("solution branches")
    ax.legend(fontsize=8)
    out = run_dir / "figures" / "branch.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def render_drift_figure(run_dir: Path) -> Path | None:
    path = run_dir / "diagnostics.csv"
    if not path.exists():
        return None
    rows = _read_csv(path)
    t = np.array([float(r["t"]) for r in rows])
    drift = np.array([float(r["drift"]) for r in rows])
    margin = np.array([float(r["margin"]) for r in rows])
    resid = np.array([float(r["residual"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.semilogy(t, np.maximum(drift, 1e-18), label="moment drift")
    ax.semilogy(t, np.maximum(resid, 1e-18), label="residual")
    ax.semilogy(t, margin, label="nondegeneracy margin")
    ax.set_xlabel("t")
    ax.set_title("flow diagnostics")
    ax.legend(fontsize=8)
    out = run_dir / "figures" / "drift.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def render_report(run_dir: str | Path) -> list[Path]:
    """Emit plot CSVs, then render every figure the artifacts support."""
    run_dir = Path(run_dir)
    written = list(emit_plot_data(run_dir))
    (run_dir / "figures").mkdir(exist_ok=True)
    for renderer in (render_curves_figure, render_branch_figure, render_drift_figure):
        out = renderer(run_dir)
        if out is not None:
            written.append(out)
    return written
