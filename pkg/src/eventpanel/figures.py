"""Matplotlib rendering of report outputs.

Figures are written next to the delimited files by the CLI report path.
Rendering is deterministic: fixed Agg backend, fixed dpi, and an explicit
PNG metadata block carrying the run manifest (never timestamps).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .series import EstimateSeries

_COLORS = ("#1f5fa8", "#c44e52", "#2e7d32", "#8172b2", "#937860")

plt.rcParams.update({
    "figure.figsize": (7.5, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
})


def save_figure(fig, path, manifest: str | None = None) -> None:
    """Write a PNG with deterministic bytes and the manifest embedded."""
    metadata = {"Software": "eventpanel"}
    if manifest is not None:
        metadata["Description"] = manifest
    fig.savefig(path, dpi=150, metadata=metadata)
    plt.close(fig)


def event_study_figure(series_list, title: str = "Event study"):
    """Point estimates with CI whiskers per event time, one color per series."""
    if isinstance(series_list, EstimateSeries):
        series_list = [series_list]
    fig, ax = plt.subplots()
    for i, series in enumerate(series_list):
        color = _COLORS[i % len(_COLORS)]
        t = series.event_time.astype(float)
        offset = 0.0 if len(series_list) == 1 else (i - (len(series_list) - 1) / 2) * 0.18
        ok = series.identified
        x = t[ok] + offset
        bands = np.isfinite(series.ci_low[ok]) & np.isfinite(series.ci_high[ok])
        ax.vlines(x[bands], series.ci_low[ok][bands], series.ci_high[ok][bands],
                  color=color, lw=1, alpha=0.8)
        ax.plot(x, series.estimate[ok], "o", ms=3.5, color=color, label=series.label)
    ax.axhline(0.0, color="0.4", lw=0.8)
    ax.axvline(-0.5, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("event time (periods since first switch)")
    ax.set_ylabel("effect (log points)")
    ax.set_title(title)
    if len(series_list) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def switcher_counts_figure(counts_frame, title: str = "Number of switchers"):
    """Bar chart of identifying switcher counts per event time."""
    fig, ax = plt.subplots()
    ax.bar(counts_frame["event_time"], counts_frame["n_switchers"],
           color=_COLORS[0], width=0.8)
    ax.set_xlabel("event time (cell convention; -k = placebo horizon k)")
    ax.set_ylabel("switchers")
    ax.set_title(title)
    fig.tight_layout()
    return fig


def weights_figure(report, title: str = "Static TWFE weights on treated cells"):
    """Histogram of implicit weights with the negative share annotated."""
    fig, ax = plt.subplots()
    ax.hist(report.weights, bins=40, color=_COLORS[0])
    ax.axvline(0.0, color="0.3", lw=0.8)
    ax.set_xlabel("weight")
    ax.set_ylabel("treated cells")
    ax.set_title(title)
    ax.text(
        0.02, 0.95,
        f"negative share: {report.share_negative:.1%}\nmin weight: {report.min_weight:.4f}",
        transform=ax.transAxes, va="top", fontsize=9,
    )
    fig.tight_layout()
    return fig


def strata_figure(table, outcome_label: str, title: str = "Cross-sectional estimates"):
    """Point-range chart of per-stratum coefficients, one row block per group."""
    fig, ax = plt.subplots()
    rows = [r for r in table.rows if r.available]
    groups = sorted({r.group for r in rows}, key=lambda g: (g != "all", g))
    strata = sorted({r.stratum for r in rows}, key=lambda s: (s != "all", s))
    xpos = {s: i for i, s in enumerate(strata)}
    for gi, g in enumerate(groups):
        xs, ys, errs = [], [], []
        for r in rows:
            if r.group != g:
                continue
            xs.append(xpos[r.stratum] + (gi - (len(groups) - 1) / 2) * 0.22)
            ys.append(r.estimate)
            errs.append(1.96 * r.se)
        ax.errorbar(xs, ys, yerr=errs, fmt="o", ms=4, lw=1, capsize=2,
                    color=_COLORS[gi % len(_COLORS)], label=f"group {g}")
    ax.axhline(0.0, color="0.4", lw=0.8)
    ax.set_xticks(range(len(strata)))
    ax.set_xticklabels(strata)
    ax.set_xlabel("stratum")
    ax.set_ylabel(f"{outcome_label} (log points)")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig
