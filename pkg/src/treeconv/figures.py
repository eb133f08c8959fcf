"""Headless matplotlib rendering for the CLI report paths.

Every renderer writes a PNG next to the delimited/structured output it
illustrates; the data files remain the machine contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from treeconv.clustering import Dendrogram


def render_curve(curve: list[tuple[int, float, float]], path) -> None:
    epochs = [row[0] for row in curve]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row[1] for row in curve], label="train", color="tab:blue")
    ax.plot(epochs, [row[2] for row in curve], label="cv", color="tab:orange")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_confusion(confusion: np.ndarray, path) -> None:
    confusion = np.asarray(confusion)
    n = confusion.shape[0]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(confusion, cmap="Blues")
    for i in range(n):
        for j in range(n):
            ax.text(j, i, str(int(confusion[i, j])), ha="center", va="center",
                    color="black" if confusion[i, j] < confusion.max() / 2 else "white")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _leaf_order(dend: Dendrogram) -> list[int]:
    by_id = {dend.n_leaves + k: m for k, m in enumerate(dend.merges)}

    def leaves(cid: int) -> list[int]:
        if cid < dend.n_leaves:
            return [cid]
        m = by_id[cid]
        return leaves(m.left) + leaves(m.right)

    return leaves(dend.n_leaves + len(dend.merges) - 1)


def render_dendrogram(dend: Dendrogram, labels: list[str], path) -> None:
    """Classic bracket plot: leaf x-slots, merge height on the y axis."""
    order = _leaf_order(dend)
    x = {leaf: float(slot) for slot, leaf in enumerate(order)}
    height = {leaf: 0.0 for leaf in order}

    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * dend.n_leaves + 1), 4))
    for k, m in enumerate(dend.merges):
        xl, xr = x[m.left], x[m.right]
        yl, yr = height[m.left], height[m.right]
        y = m.distance
        ax.plot([xl, xl, xr, xr], [yl, y, y, yr], color="tab:blue", lw=1.2)
        cid = dend.n_leaves + k
        x[cid] = (xl + xr) / 2.0
        height[cid] = y
    ax.set_xticks(range(dend.n_leaves))
    ax.set_xticklabels([labels[leaf] for leaf in order], rotation=60, ha="right")
    ax.set_ylabel("merge distance")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
