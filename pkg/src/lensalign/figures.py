"""Figure rendering for the report outputs: benchmark curves and landscape
heatmaps, written as PNG next to the CSV they visualize."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ALGO_COLORS = {"random": "tab:gray", "bo-rf": "tab:orange", "bo-gp": "tab:blue", "rl-ppo": "tab:green"}


def benchmark_figure(aggregates: list[dict], path, stat: str = "median") -> None:
    """Best-RMSE-per-step curves (central stat with interquartile band),
    one panel per noise level."""
    noises = sorted({row["noise"] for row in aggregates})
    algos = sorted({row["algorithm"] for row in aggregates})
    fig, axes = plt.subplots(1, len(noises), figsize=(5.2 * len(noises), 4.0), squeeze=False)
    for ax, noise in zip(axes[0], noises):
        for algo in algos:
            rows = sorted(
                (r for r in aggregates if r["noise"] == noise and r["algorithm"] == algo),
                key=lambda r: r["step"],
            )
            if not rows:
                continue
            steps = np.array([r["step"] for r in rows])
            mid = np.array([r[stat] for r in rows])
            lo = np.array([r["p25"] for r in rows])
            hi = np.array([r["p75"] for r in rows])
            color = ALGO_COLORS.get(algo)
            ax.plot(steps, mid, label=algo, color=color)
            ax.fill_between(steps, lo, hi, alpha=0.2, color=color)
        ax.set_title(f"noise {noise:g}")
        ax.set_xlabel("step")
        ax.set_ylabel(f"best RMSE ({stat})")
        ax.legend()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def landscape_figure(matrix: np.ndarray, dim_names: tuple[str, str], path) -> None:
    """Heatmap of one 2-D objective slice with the grid minimum and the
    nominal center marked."""
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.imshow(matrix, origin="lower", extent=(0, 1, 0, 1), cmap="viridis", aspect="equal")
    fig.colorbar(im, ax=ax, label="pattern RMSE")
    a, b = np.unravel_index(int(np.argmin(matrix)), matrix.shape)
    n = matrix.shape[0] - 1
    ax.plot(b / n, a / n, "rx", markersize=10, label="grid min")
    ax.plot(0.5, 0.5, "w+", markersize=10, label="nominal")
    ax.set_xlabel(dim_names[0])
    ax.set_ylabel(dim_names[1])
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
