"""Figure rendering for sweep reports.

Renders per-level training-curve figures and a cross-level summary to PNG
files next to the delimited report output. The curve CSVs remain the
authoritative plot data; these figures are a convenience view of the same
numbers. PNG metadata is stripped so rerendering an identical report
produces identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import MixMode
from .runner import SweepReport, _level_tag

__all__ = ["render_sweep_figures"]

_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": None}}


def _level_axis_label(mode: MixMode) -> str:
    if mode is MixMode.ADDITIVE:
        return "synthetic share added (% of real total)"
    return "synthetic cycles substituted into the training set"


def render_sweep_figures(report: SweepReport, out_dir: Path | str) -> list[Path]:
    """Write figures/<level>_curves.png per level plus figures/summary.png."""
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for lv in report.levels:
        epochs = range(1, len(lv.curves["mean_val_acc"]) + 1)
        fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9.5, 3.6))
        ax_acc.plot(epochs, lv.curves["mean_train_acc"], label="train", color="tab:orange")
        ax_acc.plot(epochs, lv.curves["mean_val_acc"], label="validation", color="tab:blue")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0.0, 1.0)
        ax_acc.legend()
        ax_loss.plot(epochs, lv.curves["mean_train_loss"], label="train", color="tab:orange")
        ax_loss.plot(epochs, lv.curves["mean_val_loss"], label="validation", color="tab:blue")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("MSE loss")
        ax_loss.legend()
        tag = _level_tag(report.mode, lv.level)
        fig.suptitle(f"Mean curves over {report.runs_per_level} runs, level {lv.level:g}")
        fig.tight_layout()
        path = fig_dir / f"{tag}_curves.png"
        fig.savefig(path, **_SAVE_KWARGS)
        plt.close(fig)
        written.append(path)

    levels = [lv.level for lv in report.levels]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    for key, label, color in (
        ("val_accuracy", "validation", "tab:blue"),
        ("train_accuracy", "train", "tab:orange"),
    ):
        means = [lv.mean[key] for lv in report.levels]
        stds = [lv.std[key] for lv in report.levels]
        ax_acc.errorbar(levels, means, yerr=stds, marker="o", capsize=3, label=label, color=color)
    ax_acc.set_xlabel(_level_axis_label(report.mode))
    ax_acc.set_ylabel("final accuracy (mean ± std)")
    ax_acc.set_ylim(0.0, 1.0)
    ax_acc.legend()
    for key, label, color in (
        ("val_loss", "validation", "tab:blue"),
        ("train_loss", "train", "tab:orange"),
    ):
        means = [lv.mean[key] for lv in report.levels]
        stds = [lv.std[key] for lv in report.levels]
        ax_loss.errorbar(levels, means, yerr=stds, marker="o", capsize=3, label=label, color=color)
    ax_loss.set_xlabel(_level_axis_label(report.mode))
    ax_loss.set_ylabel("final MSE loss (mean ± std)")
    ax_loss.legend()
    fig.suptitle(f"Sweep summary ({report.mode.value} mixing)")
    fig.tight_layout()
    path = fig_dir / "summary.png"
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    written.append(path)
    return written
