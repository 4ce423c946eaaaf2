"""Figures for ablation tables, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _series(result, key):
    mean = np.array([r.get(f"{key}_mean", np.nan) for r in result.rows], dtype=float)
    std = np.array([r.get(f"{key}_std", np.nan) for r in result.rows], dtype=float)
    return mean, std


def _line(ax, x, result, key, label):
    mean, std = _series(result, key)
    if np.all(np.isnan(mean)):
        return
    ax.errorbar(x, mean, yerr=std, marker="o", capsize=3, label=label)


def plot_ablation(result, path) -> Path:
    path = Path(path)
    if result.name == "ablation_variants":
        fig = _variants_figure(result)
    elif result.name == "ablation_noise":
        fig = _noise_figure(result)
    else:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = [r[result.x_key] for r in result.rows]
        _line(ax, x, result, "auc", "AUC")
        _line(ax, x, result, "ap", "AP")
        ax.set_xlabel(result.x_key.replace("_", " "))
        ax.set_ylabel("test metric")
        ax.legend()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def _noise_figure(result):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.arange(len(result.rows))
    labels = [f"{r['lambda_ldp']:g}/{r['lambda_dp']:g}" for r in result.rows]
    _line(a1, x, result, "auc", "CTR AUC")
    _line(a1, x, result, "ap", "CTR AP")
    _line(a2, x, result, "attack.local", "local embeddings")
    _line(a2, x, result, "attack.aggregated", "aggregated embedding")
    for ax, title in ((a1, "CTR prediction"), (a2, "behavior inference attack")):
        ax.set_xticks(x, labels)
        ax.set_xlabel("lambda LDP / lambda DP")
        ax.set_title(title)
        ax.grid(alpha=0.3)
        ax.legend()
    a2.set_ylabel("attack AUC")
    return fig


def _variants_figure(result):
    rows = [r for r in result.rows if r.get("legal")]
    preds = list(dict.fromkeys(r["predictor"] for r in rows))
    aggs = list(dict.fromkeys(r["aggregator"] for r in rows))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / max(len(aggs), 1)
    for j, a in enumerate(aggs):
        xs, ys, es = [], [], []
        for i, p in enumerate(preds):
            for r in rows:
                if r["predictor"] == p and r["aggregator"] == a:
                    xs.append(i + j * width)
                    ys.append(r.get("auc_mean", np.nan))
                    es.append(r.get("auc_std", 0.0))
        ax.bar(xs, ys, width, yerr=es, capsize=2, label=a)
    ax.set_xticks(np.arange(len(preds)) + 0.4 - width / 2, preds)
    ax.set_ylabel("test AUC")
    ax.set_xlabel("predictor")
    ax.legend(title="aggregator", fontsize="small")
    ax.grid(axis="y", alpha=0.3)
    return fig
