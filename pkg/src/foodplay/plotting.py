"""PNG figures for reports: 3-D PCA scatters, the result grid, loss curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns produce identical files
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def scatter3d(rows: Sequence[Sequence], path, title: str = "") -> Path:
    """Scatter of (x, y, z, category, cooked) rows; colour by category,
    cooked samples drawn as triangles."""
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    cats = sorted({r[3] for r in rows})
    cmap = plt.get_cmap("tab20", max(len(cats), 1))
    for ci, c in enumerate(cats):
        for cooked, marker in ((0, "o"), (1, "^"), ("", "o")):
            pts = np.array([r[:3] for r in rows if r[3] == c and r[4] == cooked], dtype=float)
            if pts.size:
                ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], color=cmap(ci), marker=marker, s=14,
                           label=c if marker == "o" or cooked == 1 else None)
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_zlabel("PC3")
    if title:
        ax.set_title(title)
    if len(cats) <= 24:
        handles, labels = ax.get_legend_handles_labels()
        seen = dict(zip(labels, handles))
        ax.legend(seen.values(), seen.keys(), fontsize=6, loc="upper left", ncol=2)
    return _save(fig, path)


def grid_heatmap(report, path) -> Path:
    """Heat map of the (row x task) grid; RMSE columns use their own scale."""
    rows, tasks = report.rows, report.tasks
    vals = np.full((len(rows), len(tasks)), np.nan)
    for i, r in enumerate(rows):
        for j, t in enumerate(tasks):
            v = report.grid[r][t]
            if not isinstance(v, dict):
                vals[i, j] = v
    fig, ax = plt.subplots(figsize=(1.5 + 1.3 * len(tasks), 1 + 0.45 * len(rows)))
    shown = vals.copy()
    for j, t in enumerate(tasks):
        col = vals[:, j]
        if t == "slice_width" and np.isfinite(col).any():
            # lower is better: map RMSE onto a 0-100 "goodness" scale for colour only
            hi = np.nanmax(col)
            shown[:, j] = 100.0 * (1.0 - col / hi) if hi > 0 else 100.0
    ax.imshow(np.nan_to_num(shown, nan=0.0), cmap="viridis", vmin=0, vmax=100, aspect="auto")
    for i in range(len(rows)):
        for j in range(len(tasks)):
            txt = "err" if np.isnan(vals[i, j]) else f"{vals[i, j]:.1f}"
            ax.text(j, i, txt, ha="center", va="center", color="w", fontsize=8)
    ax.set_xticks(range(len(tasks)), tasks, rotation=30, ha="right")
    ax.set_yticks(range(len(rows)), rows)
    fig.tight_layout()
    return _save(fig, path)


def loss_curve(history: Sequence[float], path, title: str = "triplet loss") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(1, len(history) + 1), history, lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
