"""Static figures for reports (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import CHANCE_LEVEL  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_confusion(cm, path, title="Confusion matrix"):
    counts = np.asarray(cm.counts, dtype=float)
    rows = counts.sum(axis=1, keepdims=True)
    frac = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.imshow(frac, vmin=0, vmax=1, cmap="Blues")
        n = len(cm.labels)
        ax.set_xticks(range(n), cm.labels, rotation=45, ha="right")
        ax.set_yticks(range(n), cm.labels)
        for i in range(n):
            for j in range(n):
                if counts[i, j]:
                    ax.text(j, i, f"{frac[i, j]:.2f}", ha="center", va="center", fontsize=6,
                            color="w" if frac[i, j] > 0.5 else "k")
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
        return _save(fig, path)


def plot_snr_curves(curves: dict, path, title="Balanced accuracy vs SNR"):
    """``curves`` maps a legend label to an :class:`SnrCurve`."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for name, c in curves.items():
            ax.plot(c.snr_db, c.balanced_accuracy, marker="o", ms=3, label=name)
        ax.axhline(CHANCE_LEVEL, color="0.5", ls="--", lw=0.8, label="chance")
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("balanced accuracy")
        ax.set_title(title)
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_embedding(points, labels, class_names, path, title="t-SNE of dense-layer activations"):
    points = np.asarray(points)
    labels = np.asarray(labels)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        cmap = plt.get_cmap("tab10")
        for c, name in enumerate(class_names):
            sel = labels == c
            if sel.any():
                ax.scatter(points[sel, 0], points[sel, 1], s=4, color=cmap(c), label=name)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(title)
        ax.legend(markerscale=3, loc="best")
        return _save(fig, path)


def plot_history(history, path):
    """Training loss and validation balanced accuracy per epoch."""
    h = np.asarray(history, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.plot(h[:, 0], h[:, 1], color="C0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax2 = ax.twinx()
        ax2.plot(h[:, 0], h[:, 2], color="C1", label="val balanced acc")
        ax2.set_ylim(0, 1)
        ax2.set_ylabel("balanced accuracy")
        fig.legend(loc="upper center", ncol=2)
        return _save(fig, path)


def plot_spectrogram(planes, path, title=None, sample_rate_hz=None):
    """Log-magnitude image of one ``[2, S, C]`` sample."""
    mag = np.log10(np.hypot(planes[0], planes[1]) + 1e-12)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        extent = None
        if sample_rate_hz:
            S, C = mag.shape
            extent = (0, C * S / sample_rate_hz * 1e3, -sample_rate_hz / 2e3, sample_rate_hz / 2e3)
            ax.set_xlabel("time (ms)")
            ax.set_ylabel("frequency (kHz)")
        ax.imshow(mag, aspect="auto", origin="lower", cmap="viridis", extent=extent)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_field_table(table: dict, path, title="Pooled drone/noise balanced accuracy"):
    """Heat map of a ``{(bearing, distance): value}`` field table."""
    bearings = sorted({k[0] for k in table})
    dists = sorted({k[1] for k in table})
    grid = np.full((len(bearings), len(dists)), np.nan)
    for (b, d), v in table.items():
        grid[bearings.index(b), dists.index(d)] = v
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.6))
        ax.imshow(grid, vmin=0, vmax=1, cmap="RdYlGn", aspect="auto")
        ax.set_xticks(range(len(dists)), [f"{d:g} m" for d in dists])
        ax.set_yticks(range(len(bearings)), [f"{b:g}°" for b in bearings])
        for i in range(len(bearings)):
            for j in range(len(dists)):
                if np.isfinite(grid[i, j]):
                    ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center", fontsize=7)
        ax.set_title(title)
        return _save(fig, path)


def render_report(report, out) -> dict:
    out = Path(out)
    files = {
        "confusion_png": plot_confusion(report.cm, out / "confusion.png"),
        "snr_curve_png": plot_snr_curves({"model": report.curve}, out / "snr_curve.png"),
    }
    if report.embedding is not None and report.points is not None:
        files["embeddings_png"] = plot_embedding(
            report.points, report.embedding.labels, report.cm.labels, out / "embeddings.png"
        )
    return files
