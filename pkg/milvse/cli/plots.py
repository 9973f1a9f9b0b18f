"""Diagnostic figures, rendered off-screen."""

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from milvse.objective.losses import hinge_loss, pseudo_huber_loss  # noqa: E402
from milvse.utils.logger import logger  # noqa: E402


def size(scale: float = 1.0) -> tuple[float, float]:
    """Figure size in inches at the golden ratio."""
    width = 6.4 * scale
    return width, width * (np.sqrt(5.0) - 1.0) / 2.0


def save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Figure written to {path}")
    return path


def plot_loss_curve(rho: float, delta: float, path: Path, span: float = 3.0) -> Path:
    """Hinge vs pseudo-Huber as functions of the similarity gap."""
    gaps = np.linspace(rho - span, rho + span, 401)
    fig, ax = plt.subplots(figsize=size())
    ax.plot(gaps, hinge_loss(gaps, rho).data, label="hinge")
    ax.plot(gaps, pseudo_huber_loss(gaps, rho, delta).data, label=f"pseudo-Huber (delta={delta:g})")
    ax.axvline(rho, color="grey", linestyle=":", linewidth=1)
    ax.set_xlabel("f(V, S+) - f(V, S-)")
    ax.set_ylabel("loss")
    ax.set_title(f"Ranking losses, margin {rho:g}")
    ax.legend()
    return save(fig, path)


def plot_k_sweep(ks: Sequence[int], nmrs: Sequence[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=size())
    ax.plot(list(ks), list(nmrs), marker="o")
    ax.set_xticks(list(ks))
    ax.set_xlabel("K (embeddings per item)")
    ax.set_ylabel("nMR (%)")
    ax.set_title("Retrieval vs number of embeddings")
    return save(fig, path)


def plot_attention(maps: Mapping[str, np.ndarray], path: Path) -> Path:
    """One K x T heatmap per named map, stacked vertically."""
    fig, axes = plt.subplots(len(maps), 1, figsize=size(1.2), squeeze=False)
    for ax, (title, attention) in zip(axes[:, 0], maps.items()):
        image = ax.imshow(attention, aspect="auto", cmap="viridis", vmin=0.0)
        ax.set_title(title, fontsize=9)
        ax.set_ylabel("k")
        fig.colorbar(image, ax=ax, fraction=0.025)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    return save(fig, path)
