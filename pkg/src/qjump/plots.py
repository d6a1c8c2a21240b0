"""Figure rendering for the command-line reports.

Every command that writes a delimited output drops a PNG next to it.  All
rendering happens on the Agg backend; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .instrument import DetectorResponse, Histogram

PS = 1e-12
NS = 1e-9


def save_histogram_figure(path, hist: Histogram, title: str = "coincidence histogram") -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.step(hist.centers / NS, hist.counts, where="mid", lw=0.7, color="C0")
    ax.set_xlabel("detection time difference (ns)")
    ax.set_ylabel("counts per bin")
    ax.set_title(title)
    if hist.counts.max() > 0:
        ax.set_yscale("symlog", linthresh=max(1.0, hist.counts.max() * 1e-3))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_response_figure(path, g: DetectorResponse) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(g.offsets / PS, g.weights, width=g.bin_width / PS, color="C1", alpha=0.8)
    ax.set_xlabel("offset from centroid (ps)")
    ax.set_ylabel("weight")
    ax.set_title("normalized detector response")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curves_figure(path, grid: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for label, values in columns.items():
        ax.plot(grid / NS, values, lw=1.2, label=label)
    ax.set_xlabel("time difference (ns)")
    ax.set_ylabel("value")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_fit_figure(
    path,
    hist: Histogram,
    mask: np.ndarray,
    fitted: np.ndarray,
    *,
    rise_time_ps: float,
    rise_time_err_ps: float,
) -> None:
    centers = hist.centers[mask]
    observed = hist.counts[mask].astype(float)
    pulls = (observed - fitted) / np.sqrt(np.maximum(observed, 1.0))
    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(8, 6), sharex=True, height_ratios=[3, 1]
    )
    ax0.step(centers / NS, observed, where="mid", lw=0.6, color="C0", label="data")
    ax0.plot(centers / NS, fitted, color="C3", lw=1.2, label="fit")
    ax0.set_ylabel("counts per bin")
    ax0.set_yscale("log")
    ax0.set_ylim(bottom=max(0.5, observed[observed > 0].min() * 0.5) if np.any(observed > 0) else 0.5)
    ax0.legend(frameon=False, title=f"rise time {rise_time_ps:.1f} ± {rise_time_err_ps:.1f} ps")
    ax1.axhline(0.0, color="0.5", lw=0.8)
    ax1.plot(centers / NS, pulls, ",", color="C0")
    ax1.set_xlabel("detection time difference (ns)")
    ax1.set_ylabel("pull")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
