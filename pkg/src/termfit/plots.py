"""Matplotlib rendering of fitted curves and error comparisons.

Figures are written next to the delimited outputs; everything is drawn from
already-deterministic inputs so repeated runs produce identical files.
"""
from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bondmath import ZeroCurve
from .calibration import FitResult
from .models import model_rates
from .stats import ComparisonReport

__all__ = ["curve_comparison_figure", "rmse_comparison_figure", "save_figure"]

_COLORS = {"ns": "tab:blue", "svensson": "tab:red"}
_LABELS = {"ns": "Nelson-Siegel", "svensson": "Svensson"}


def curve_comparison_figure(curve: ZeroCurve, fits: list[FitResult], samples: int = 160):
    """Observed zero-coupon rates against the fitted model curves."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    tenors = curve.tenor_array()
    dense = np.linspace(min(0.05, tenors[0]), tenors[-1] * 1.05, samples)
    for fit in fits:
        ax.plot(
            dense,
            model_rates(fit.model, fit.params, dense),
            label=f"{_LABELS[fit.model.value]} (rmse {fit.rmse:.4f})",
            color=_COLORS[fit.model.value],
            linewidth=1.6,
        )
    ax.scatter(
        tenors,
        curve.rate_array(),
        color="black",
        zorder=5,
        s=28,
        label="bootstrapped zero rates",
    )
    ax.set_xlabel("maturity (years)")
    ax.set_ylabel("spot rate (% p.a.)")
    ax.set_title(f"Zero curve and fitted models, {curve.date.isoformat()}")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    return fig


def rmse_comparison_figure(report: ComparisonReport):
    """Per-date rmse of both models plus their distribution."""
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(9.5, 4.2), gridspec_kw={"width_ratios": [2.2, 1.0]}
    )
    idx = np.arange(len(report.dates))
    left.plot(idx, report.ns_rmse, marker="o", ms=3.5, lw=1.0,
              color=_COLORS["ns"], label=_LABELS["ns"])
    left.plot(idx, report.sv_rmse, marker="s", ms=3.5, lw=1.0,
              color=_COLORS["svensson"], label=_LABELS["svensson"])
    step = max(1, len(idx) // 8)
    left.set_xticks(idx[::step])
    left.set_xticklabels([report.dates[i].isoformat() for i in idx[::step]],
                         rotation=45, ha="right", fontsize=7)
    left.set_ylabel("rmse (percentage points)")
    left.set_title("Per-date calibration error")
    left.grid(True, alpha=0.3)
    left.legend(fontsize=9)

    box = right.boxplot(
        [report.ns_rmse, report.sv_rmse],
        tick_labels=[_LABELS["ns"], _LABELS["svensson"]],
        patch_artist=True,
    )
    for patch, key in zip(box["boxes"], ("ns", "svensson")):
        patch.set_facecolor(_COLORS[key])
        patch.set_alpha(0.45)
    right.set_title("Error distribution")
    right.grid(True, axis="y", alpha=0.3)
    right.tick_params(axis="x", labelsize=8)
    fig.suptitle(f"Model comparison: selected = {report.selected_model}", fontsize=11)
    fig.tight_layout()
    return fig


def save_figure(fig, path, dpi: int = 150) -> None:
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
