"""Report figures and gnuplot data files.

Figures are rendered off-screen with the Agg backend; every figure has a
whitespace-delimited ``.dat`` twin so it can be re-plotted without Python.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes reproducible across runs
PNG_META = {"Software": None}


def write_dat(path, columns, rows, comment=None):
    """gnuplot layout: ``#`` header lines, one whitespace-separated row per line.

    ``rows`` may be a list of blocks (lists of rows); blocks are separated by a
    blank line so gnuplot's ``index`` can address them.
    """
    blocks = rows if rows and isinstance(rows[0], list) and rows[0] and isinstance(rows[0][0], (list, tuple)) \
        else [rows]
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for b, block in enumerate(blocks):
            if b:
                fh.write("\n\n")
            for row in block:
                fh.write(" ".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{v:.6g}"
    return str(v).replace(" ", "_")


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)


def plot_losses(path, steps, curves, window=None):
    """Raw (faint) and moving-average loss curves against the step index."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, values in curves.items():
        v = np.asarray(values, dtype=np.float64)
        line, = ax.plot(steps, v, alpha=0.25, lw=0.7)
        w = window or max(1, len(v) // 20)
        if len(v) >= w > 1:
            sm = np.convolve(v, np.ones(w) / w, mode="valid")
            ax.plot(steps[w - 1:], sm, color=line.get_color(), lw=1.5, label=name)
        else:
            line.set_label(name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_examples(path, rows, dynamic_range=60.0):
    """Image grid; ``rows`` is a list of ``{title: dB array}`` dicts, one per frame.

    Keys named ``diff`` are shown on a symmetric diverging scale.
    """
    ncol = max(len(r) for r in rows)
    fig, axes = plt.subplots(len(rows), ncol, figsize=(2.2 * ncol, 2.2 * len(rows)), squeeze=False)
    for i, row in enumerate(rows):
        for j, ax in enumerate(axes[i]):
            ax.axis("off")
            if j >= len(row):
                continue
            title, img = list(row.items())[j]
            if title.startswith("diff"):
                lim = max(float(np.abs(img).max()), 1e-6)
                ax.imshow(img, cmap="RdBu_r", vmin=-lim, vmax=lim)
            else:
                ax.imshow(img, cmap="gray", vmin=-dynamic_range, vmax=0)
            if i == 0:
                ax.set_title(title, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_summary(path, labels, series, ylabel):
    """Grouped bars: one group per label, one bar per series (e.g. input/output)."""
    x = np.arange(len(labels))
    width = 0.8 / max(1, len(series))
    fig, ax = plt.subplots(figsize=(max(4, 1.1 * len(labels) + 2), 3.2))
    for k, (name, values) in enumerate(series.items()):
        ax.bar(x + (k - (len(series) - 1) / 2) * width, values, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def figure_paths(directory, stem):
    return os.path.join(directory, f"{stem}.png"), os.path.join(directory, f"{stem}.dat")
