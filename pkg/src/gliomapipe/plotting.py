"""Static report figures: Bland-Altman, regression scatter, arm comparison, loss curve."""
from __future__ import annotations

import contextlib
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REPORT_RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.direction": "out",
    "ytick.direction": "out",
    "legend.frameon": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "gliomapipe",
}

# Colors for ET / WT / TC bars and the two comparison arms.
REGION_COLORS = {"et": "#d95f02", "wt": "#1b9e77", "tc": "#7570b3"}
ARM_COLORS = ("#969696", "#2171b5", "#cb181d", "#238b45")


@contextlib.contextmanager
def report_style():
    with matplotlib.rc_context(REPORT_RC):
        yield


def _save(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # no Software/date metadata so re-runs write identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def bland_altman_plot(mean, diff, mean_diff, loa_lower, loa_upper, path, title="Bland-Altman"):
    with report_style():
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        ax.scatter(mean, diff, s=14, alpha=0.75, color="#2171b5", edgecolor="none")
        ax.axhline(mean_diff, color="k", lw=1.2, label=f"mean diff {mean_diff:.2f} d")
        ax.axhline(loa_upper, color="#cb181d", lw=1, ls="--", label=f"+1.96 SD {loa_upper:.1f}")
        ax.axhline(loa_lower, color="#cb181d", lw=1, ls="--", label=f"-1.96 SD {loa_lower:.1f}")
        ax.set_xlabel("mean of predicted and true OS (days)")
        ax.set_ylabel("predicted - true OS (days)")
        ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        _save(fig, path)


def scatter_plot(true_days, pred_days, path, title="Predicted vs ground-truth OS"):
    true_days = np.asarray(true_days, dtype=float)
    pred_days = np.asarray(pred_days, dtype=float)
    with report_style():
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.scatter(true_days, pred_days, s=14, alpha=0.75, color="#238b45", edgecolor="none")
        lo = float(min(true_days.min(), pred_days.min(), 0.0))
        hi = float(max(true_days.max(), pred_days.max())) * 1.05 or 1.0
        ax.plot([lo, hi], [lo, hi], color="k", lw=0.8, ls=":")
        if true_days.size >= 2 and np.ptp(true_days) > 0:
            slope, icept = np.polyfit(true_days, pred_days, 1)
            xs = np.array([lo, hi])
            ax.plot(xs, slope * xs + icept, color="#cb181d", lw=1.2)
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_xlabel("ground-truth OS (days)")
        ax.set_ylabel("predicted OS (days)")
        ax.set_title(title)
        _save(fig, path)


def comparison_plot(rows, path, metric_label="mean Dice"):
    """Grouped bars of ET/WT/TC Dice per arm; ``rows`` are dicts with arm, dice_et, dice_wt, dice_tc."""
    regions = ("et", "wt", "tc")
    width = 0.8 / max(len(rows), 1)
    with report_style():
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        x = np.arange(len(regions))
        for i, row in enumerate(rows):
            vals = [row[f"dice_{r}"] for r in regions]
            ax.bar(x + (i - (len(rows) - 1) / 2) * width, vals, width,
                   label=row["arm"], color=ARM_COLORS[i % len(ARM_COLORS)])
        ax.set_xticks(x)
        ax.set_xticklabels([r.upper() for r in regions])
        ax.set_ylim(0, 1)
        ax.set_ylabel(metric_label)
        ax.legend(loc="lower right", fontsize=8)
        _save(fig, path)


def loss_plot(history, path):
    with report_style():
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        if len(history):
            ax.plot(np.arange(1, len(history) + 1), history, color="#2171b5", lw=1)
        ax.set_xlabel("step")
        ax.set_ylabel("training loss")
        _save(fig, path)
