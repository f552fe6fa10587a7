"""Optional PNG figures written next to the CSV artifacts.

Rendering uses the Agg backend and strips the PNG ``Software`` tag so
repeated runs produce identical files.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path) -> None:
    tmp = f"{path}.tmp.png"
    fig.savefig(tmp, **_SAVE)
    plt.close(fig)
    os.replace(tmp, path)


def plot_predictions(path, timestamps, mean, std, reference=None, label: str = "") -> None:
    """Predictive mean with a +/- 2 std band, optionally against reference values."""
    t = np.asarray(timestamps)
    mean = np.asarray(mean)
    std = np.asarray(std)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.fill_between(t, mean - 2 * std, mean + 2 * std, color="C0", alpha=0.25, linewidth=0)
    ax.plot(t, mean, color="C0", label="surrogate mean")
    if reference is not None:
        ax.plot(t, reference, "k.", markersize=4, label="reference")
    ax.set_xlabel("timestamp")
    ax.set_ylabel(label)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(path, rows) -> None:
    """Mean test RMSE against contamination fraction, one line per (mode, quantity)."""
    groups: dict = {}
    for r in rows:
        if r.error is None:
            groups.setdefault((r.mode, r.quantity), {}).setdefault(r.fraction, []).append(r.rmse)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (mode, quantity), cells in sorted(groups.items()):
        fr = sorted(cells)
        ax.semilogy([100 * f for f in fr], [np.mean(cells[f]) for f in fr], "o-", label=f"{mode} {quantity}")
    ax.set_xlabel("outliers (%)")
    ax.set_ylabel("test RMSE")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_density(path, bin_left, bin_right, density, label: str = "") -> None:
    left = np.asarray(bin_left)
    width = np.asarray(bin_right) - left
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(left, density, width=width, align="edge", color="C1", edgecolor="none")
    ax.set_xlabel(label)
    ax.set_ylabel("density")
    fig.tight_layout()
    _save(fig, path)
