"""Matplotlib renderings for evaluation reports, written next to the data files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def render_eval_figures(report: dict, outdir) -> list[str]:
    """Per-iteration metric curves for one evaluation report."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    rows = report["per_iteration"]
    iters = [r["iteration"] for r in rows]
    for key, label in (("dsc", "DSC"), ("assd", "ASSD (voxels)"), ("hd95", "HD95 (mm)")):
        means = [r[f"{key}_mean"] for r in rows]
        stds = [r[f"{key}_std"] for r in rows]
        if any(m is None for m in means):
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        means = np.asarray(means)
        stds = np.asarray(stds)
        ax.plot(iters, means, marker="o")
        ax.fill_between(iters, means - stds, means + stds, alpha=0.2)
        ax.set_xlabel("refinement iteration")
        ax.set_ylabel(label)
        ax.set_xticks(iters)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = os.path.join(outdir, f"{key}_per_iteration.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_ablation_figure(table: dict, outdir, name="ablation_final_dsc.png") -> str:
    """Bar chart of final-iteration mean DSC per variant."""
    os.makedirs(outdir, exist_ok=True)
    labels = list(table.keys())
    values = [table[k]["final_dsc_mean"] for k in labels]
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(labels)), 3.5))
    ax.bar(range(len(labels)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("final mean DSC")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
