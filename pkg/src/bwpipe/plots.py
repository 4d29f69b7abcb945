"""Standalone SVG figure emission (line plots, scatter, histograms).

Figures are deterministic: metadata dates are stripped and the hash
salt is pinned, so reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "bwpipe"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _finish(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)


def pdp_plot(curve, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if curve.band_lower is not None:
        ax.fill_between(curve.grid, curve.band_lower, curve.band_upper, alpha=0.25, label="band")
    ax.plot(curve.grid, curve.mean_prediction, lw=1.5)
    ax.set_xlabel(curve.feature)
    ax.set_ylabel("mean prediction")
    ax.set_title(f"Partial dependence: {curve.feature}")
    _finish(fig, path)


def residual_scatter_plot(yhat, residuals, path: str | Path, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter(yhat, residuals, s=8, alpha=0.6)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("residual")
    ax.set_title(f"Residuals vs predicted {label}".strip())
    _finish(fig, path)


def residual_hist_plot(report, path: str | Path, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    widths = report.hist_edges[1:] - report.hist_edges[:-1]
    n = report.residuals.size
    ax.bar(
        report.hist_edges[:-1],
        report.hist_counts / (n * widths),
        width=widths,
        align="edge",
        alpha=0.6,
        label="histogram",
    )
    if report.kde_grid.size:
        ax.plot(report.kde_grid, report.kde_density, lw=1.5, label="kde")
    ax.set_xlabel("residual")
    ax.set_ylabel("density")
    ax.set_title(f"Residual distribution {label}".strip())
    ax.legend()
    _finish(fig, path)


def qq_plot(report, path: str | Path, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    if report.qq_theoretical.size:
        ax.scatter(report.qq_theoretical, report.qq_sample, s=8, alpha=0.6)
        lim = max(abs(report.qq_theoretical[0]), abs(report.qq_theoretical[-1]))
        ax.plot([-lim, lim], [-lim, lim], color="gray", lw=0.8)
    ax.set_xlabel("theoretical quantile")
    ax.set_ylabel("sample quantile")
    ax.set_title(f"Residual QQ {label}".strip())
    _finish(fig, path)


def importance_plot(names, percentages, path: str | Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 0.3 * max(len(names), 4) + 1.2))
    pos = range(len(names))[::-1]
    ax.barh(list(pos), list(percentages), alpha=0.75)
    ax.set_yticks(list(pos))
    ax.set_yticklabels(list(names), fontsize=7)
    ax.set_xlabel("importance (%)")
    ax.set_title(title)
    _finish(fig, path)
