"""
Static SVG figures: target density with point masses, and the two kernel
embeddings ``P_k`` and ``P_kⁿ``.

Output is deterministic (fixed hash salt, no date metadata) and
self-contained (glyphs drawn as paths, DOCTYPE removed).
"""
from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .distributions import embedding  # noqa: E402

__all__ = ["plot_grid", "write_density_svg", "write_embedding_svg"]

_RC = {"svg.hashsalt": "mmdquant", "svg.fonttype": "path", "font.size": 9}
_PLOT_MC_SIZE = 100_000


def plot_grid(target, points, num: int = 400) -> np.ndarray:
    lo, hi = target.quantile([0.002, 0.998])
    span = max(hi, np.max(points)) - min(lo, np.min(points))
    return np.linspace(min(lo, np.min(points)) - 0.1 * span,
                       max(hi, np.max(points)) + 0.1 * span, num)


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    text = path.read_text(encoding="utf-8")
    path.write_text(re.sub(r"<!DOCTYPE[^>]*>\s*", "", text, count=1), encoding="utf-8")


def write_density_svg(path, target, quantization, title: str = "") -> None:
    x = plot_grid(target, quantization.points)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, target.pdf(x), color="C0", label="density")
        ax2 = ax.twinx()
        ax2.vlines(quantization.points, 0.0, quantization.weights, color="C3")
        ax2.plot(quantization.points, quantization.weights, "o", color="C3", label="weights")
        ax2.set_ylim(bottom=min(0.0, float(np.min(quantization.weights))) * 1.1)
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        ax2.set_ylabel("weight")
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def write_embedding_svg(path, target, spec, quantization, seed: int = 0, title: str = "") -> None:
    x = plot_grid(target, quantization.points)
    rng = np.random.default_rng([seed, 2])
    target_emb, _ = embedding(target, spec, x, rng=rng, size=_PLOT_MC_SIZE)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, target_emb, color="C0", label="target embedding")
        ax.plot(x, quantization.embedding(spec, x), "--", color="C3", label="quantizer embedding")
        ax.set_xlabel("x")
        ax.legend(loc="upper right", frameon=False)
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
