"""Figure rendering for CLI outputs: allocation scatters and learning curves.

Every figure is written next to the delimited file it visualizes; nothing
here is needed by the library API.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_allocations(actions: np.ndarray, path, title: str = "") -> None:
    """n = 3: scatter in the (a_1, a_2) plane; otherwise per-coordinate means."""
    n = actions.shape[1]
    fig, ax = plt.subplots(figsize=(5, 4.2))
    if n == 3:
        ax.scatter(actions[:, 0], actions[:, 1], s=4, alpha=0.35, linewidths=0)
        ax.plot([0, 1], [1, 0], "k--", lw=0.8)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("$a_1$")
        ax.set_ylabel("$a_2$")
    else:
        means = actions.mean(axis=0)
        ax.bar(np.arange(1, n + 1), means)
        ax.axhline(1.0 / n, color="k", ls="--", lw=0.8)
        ax.set_xlabel("entity")
        ax.set_ylabel("mean allocation")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_learning_curve(metrics_csv, path) -> None:
    steps, rewards, entropies = [], [], []
    with open(metrics_csv) as f:
        for row in csv.DictReader(f):
            steps.append(int(row["steps"]))
            rewards.append(float(row["mean_reward"]))
            entropies.append(float(row["entropy"]))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.5, 6), sharex=True)
    ax1.plot(steps, rewards)
    ax1.set_ylabel("mean episode reward")
    ax2.plot(steps, entropies, color="tab:orange")
    ax2.set_ylabel("empirical entropy")
    ax2.set_xlabel("environment steps")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
