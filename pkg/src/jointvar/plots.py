"""Vector-graphics figures: transition-matrix heatmaps and benchmark panels.

matplotlib is imported lazily with the Agg backend so headless runs work and
the import cost is only paid when figures are requested.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def heatmap(matrix: np.ndarray, title: str, path, variables=None) -> None:
    """One transition-matrix heatmap, color scale symmetric about zero."""
    plt = _plt()
    matrix = np.asarray(matrix, dtype=float)
    vmax = max(float(np.max(np.abs(matrix))), 1e-12)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(matrix, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_title(title)
    if variables is not None and matrix.shape[1] == len(variables):
        ax.set_xticks(range(len(variables)))
        ax.set_xticklabels(variables, rotation=90, fontsize=7)
        ax.set_yticks(range(len(variables)))
        ax.set_yticklabels(variables, fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(Path(path))
    plt.close(fig)


def summary_panels(summary_rows: list[dict], metric: str, path) -> None:
    """Mean metric vs series length, one panel per condition, one line per
    method."""
    plt = _plt()
    conditions = sorted({r["condition"] for r in summary_rows})
    methods = sorted({r["method"] for r in summary_rows})
    fig, axes = plt.subplots(
        1, len(conditions), figsize=(4.0 * len(conditions), 3.4), squeeze=False
    )
    for ax, cond in zip(axes[0], conditions):
        for method in methods:
            pts = sorted(
                (r["t"], r[f"mean_{metric}"])
                for r in summary_rows
                if r["condition"] == cond and r["method"] == method
            )
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_title(f"condition: {cond}")
        ax.set_xlabel("T")
        ax.set_ylabel(f"mean {metric}")
        ax.grid(True, alpha=0.3)
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(Path(path))
    plt.close(fig)
