"""Matplotlib figures for the experiment reports (written to files, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .hashing import HashParams  # noqa: E402
from .music import Scheme, find_peaks, measure, music_pseudospectrum  # noqa: E402
from .synth import GroundTruth  # noqa: E402

LABELS = {"first": "first 4k lags", "perm": "permuted 4k lags", "all": "all d lags"}
STYLES = {"first": ("tab:red", "s"), "perm": ("tab:blue", "o"), "all": ("black", "^")}


def plot_error_curves(summary: list[dict], path, stat: str = "mean", title: str | None = None):
    """Normalized error against noise variance, one line per scheme."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    schemes = sorted({r["scheme"] for r in summary}, key=lambda s: list(LABELS).index(s))
    for scheme in schemes:
        rows = sorted((r for r in summary if r["scheme"] == scheme), key=lambda r: r["nu"])
        color, marker = STYLES[scheme]
        ax.plot([r["nu"] for r in rows], [r[stat] for r in rows], marker=marker, color=color,
                lw=1.2, ms=4, label=LABELS[scheme])
    ax.set_xlabel(r"noise variance $\nu$")
    ax.set_ylabel(r"$\|t - \tilde t\|_2 / \|t\|_2$ (%s)" % stat)
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_pseudospectra(gt: GroundTruth, t_noisy: np.ndarray, k: int, perm: HashParams, path,
                       grid_size: int | None = None):
    """MUSIC pseudospectra of the first and permuted schemes for one noisy column.

    The permuted spectrum is mapped back to the original frequency axis, so
    both panels show peaks against the same true frequencies (first half of
    the band only, the other half is the mirror image).
    """
    d = gt.d
    grid_size = grid_size or 4 * d
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.0), sharey=False)
    truth = np.sort(np.asarray(gt.freqs))
    truth = truth[truth < 0.5]
    for ax, scheme in zip(axes, (Scheme.FIRST_OK, Scheme.PERMUTED_OK)):
        meas = measure(scheme, t_noisy, k, perm)
        ps = music_pseudospectrum(meas.values, k, grid_size)
        grid = ps.grid
        if scheme is Scheme.PERMUTED_OK:
            # an on-grid point j of the dilated axis sits at a * j on the original one
            on_grid = np.arange(0, grid_size, grid_size // d)
            grid = (perm.a * (on_grid * d // grid_size) % d) / d
            values = ps.values[on_grid]
        else:
            values = ps.values
        order = np.argsort(grid)
        keep = grid[order] < 0.5
        # neighbouring points of the unmapped permuted axis are unrelated, so draw dots
        style = dict(lw=0.6) if scheme is Scheme.FIRST_OK else dict(ls="", marker=".", ms=1.5)
        ax.semilogy(grid[order][keep], values[order][keep], color=STYLES[scheme.value][0], **style)
        peaks = find_peaks(ps.values, k).indices
        for f in truth:
            ax.axvline(f, color="0.5", lw=0.6, ls="--")
        ax.set_title(f"{LABELS[scheme.value]} ({len(np.unique(peaks))} peaks)", fontsize=9)
        ax.set_xlabel("frequency")
    axes[0].set_ylabel("pseudospectrum")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
