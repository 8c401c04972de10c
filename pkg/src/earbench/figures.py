"""Matplotlib rendering of report figures, written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps PNG bytes stable across reruns in one environment.
_PNG_METADATA = {"Software": "earbench"}
_DPI = 120


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_cmc(path: str | Path, cmc: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ranks = np.arange(1, len(cmc) + 1)
    ax.plot(ranks, cmc, marker="o", markersize=3)
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title("cumulative match characteristic")
    fig.tight_layout()
    _save(fig, path)


def plot_histogram(path: str | Path, labels: list[str], counts: np.ndarray, title: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(len(labels)), counts, color="#4878a8")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("images")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_error_rates(path: str | Path, strata: dict[str, tuple[int, float | None]],
                     title: str) -> None:
    labels = list(strata.keys())
    rates = [rate if rate is not None else np.nan for _, rate in strata.values()]
    counts = [count for count, _ in strata.values()]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(len(labels)), rates, color="#a85448")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("error rate")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    for x, (rate, count) in enumerate(zip(rates, counts)):
        if np.isnan(rate):
            ax.text(x, 0.02, "empty", ha="center", fontsize=7, color="gray")
        else:
            ax.text(x, rate + 0.02, str(count), ha="center", fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_confusion(path: str | Path, names: tuple[str, ...], confusion: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    image = ax.imshow(confusion, cmap="Blues")
    ax.set_xticks(np.arange(len(names)))
    ax.set_yticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("predicted dataset")
    ax.set_ylabel("true dataset")
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, str(int(confusion[i, j])), ha="center", va="center", fontsize=8)
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)
