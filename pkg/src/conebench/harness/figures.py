"""Matplotlib renderings emitted next to the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_benchmark_figure(report, path) -> None:
    """Grouped RMSE/MAE bars, one pair per estimator."""
    names = [n for n in report.estimator_order
             if report.summary[n]["rmse"] is not None]
    if not names:
        return
    rmse = [report.summary[n]["rmse"] for n in names]
    mae = [report.summary[n]["mae"] for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(names)), 4.0))
    ax.bar(x - 0.2, rmse, width=0.4, label="RMSE")
    ax.bar(x + 0.2, mae, width=0.4, label="MAE")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("error")
    ax.set_title("Policy-value estimation error by estimator")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figures(result, out_dir) -> list:
    """RMSE and MAE heatmaps over the gamma/zeta grid; returns paths."""
    gammas = sorted({c.gamma for c in result.cells})
    zetas = sorted({c.zeta for c in result.cells})
    paths = []
    for metric in ("rmse", "mae"):
        grid = np.full((len(zetas), len(gammas)), np.nan)
        for c in result.cells:
            if c.status == "ok" and getattr(c, metric) is not None:
                grid[zetas.index(c.zeta), gammas.index(c.gamma)] = getattr(c, metric)
        fig, ax = plt.subplots(figsize=(6.0, 4.8))
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(gammas)))
        ax.set_xticklabels([f"{g:g}" for g in gammas])
        ax.set_yticks(range(len(zetas)))
        ax.set_yticklabels([f"{z:g}" for z in zetas])
        ax.set_xlabel("gamma (treatment-loss weight)")
        ax.set_ylabel("zeta (agreement-loss weight)")
        ax.set_title(f"{metric.upper()} across the hyperparameter grid")
        for (row, col), val in np.ndenumerate(grid):
            if np.isfinite(val):
                ax.text(col, row, f"{val:.3f}", ha="center", va="center",
                        color="white", fontsize=7)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        path = Path(out_dir) / f"sweep_{metric}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
