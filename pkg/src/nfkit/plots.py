"""Figure writers for run artifacts.

Every CLI command drops at least one rendered figure into its run directory
next to the CSVs.  All writers take explicit data, render with the Agg
backend, and return the written path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def residual_scatter(path: str, residuals: np.ndarray, bounds: np.ndarray, title: str) -> str:
    """Per-trial residuals against their acceptance bounds, log scale."""
    fig, ax = plt.subplots(figsize=(7, 4))
    trials = np.arange(len(residuals))
    floor = 1e-18
    ax.scatter(trials, np.maximum(residuals, floor), s=8, label="residual")
    ax.plot(trials, bounds, color="crimson", lw=1, label="bound")
    ax.set_yscale("log")
    ax.set_xlabel("trial")
    ax.set_ylabel("|lhs - rhs|")
    ax.set_title(title)
    ax.legend(loc="upper right")
    return _finish(fig, path)


def pdf_overlay(path: str, x: np.ndarray, curves: dict, title: str, xlabel: str = "x") -> str:
    """Overlaid densities (or any labeled curves) on one axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, f in curves.items():
        ax.plot(x, f, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("f(x)")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def moment_bands(
    path: str,
    times: np.ndarray,
    mean: np.ndarray,
    sd: np.ndarray,
    title: str,
    ref_times: np.ndarray | None = None,
    ref_mean: np.ndarray | None = None,
    ref_sd: np.ndarray | None = None,
) -> str:
    """Mean with a +-1 sd band, optionally against a reference."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, mean, lw=1.4, label="mean")
    ax.fill_between(times, mean - sd, mean + sd, alpha=0.25, label="+-1 sd")
    if ref_times is not None and ref_mean is not None:
        ax.plot(ref_times, ref_mean, "k--", lw=1, label="reference mean")
        if ref_sd is not None:
            ax.plot(ref_times, ref_mean - ref_sd, "k:", lw=0.8)
            ax.plot(ref_times, ref_mean + ref_sd, "k:", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("response")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def intensity_curves(path: str, times: np.ndarray, values: np.ndarray, title: str) -> str:
    """One curve per intensity order; ``values`` has shape (order+1, n_t)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in range(values.shape[0]):
        ax.plot(times, values[m], lw=1.2, label=f"order {m}")
    ax.set_xlabel("t")
    ax.set_ylabel("effective intensity")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def error_bars(path: str, labels: list, values: list, bounds: list, title: str) -> str:
    """Named error magnitudes against their bounds, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = np.arange(len(labels))
    floor = 1e-18
    ax.bar(pos, np.maximum(values, floor), width=0.6, label="measured")
    ax.scatter(pos, bounds, color="crimson", zorder=3, marker="_", s=400, label="bound")
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)
