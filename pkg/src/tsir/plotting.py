"""Report figures: MAE summary bars and example OOD forecasts."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tasks import Mode  # noqa: E402

PALETTE = ["#4477AA", "#EE6677", "#228833", "#CCBB44", "#66CCEE", "#AA3377", "#BBBBBB", "#000000"]

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_mae_bars(table, path: str | Path) -> Path:
    """Grouped bars of mean MAE (error bars = std), one panel per mode."""
    from .evaluator import MODE_LABELS, TASK_LABELS, TASK_ORDER

    modes = [m for m in (Mode.TASK, Mode.BASELINE) if any(c.mode is m for c in table.cells)]
    archs = table.archs()
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(len(modes), 1, figsize=(7.0, 2.6 * len(modes)), squeeze=False)
        for ax, mode in zip(axes[:, 0], modes):
            tasks = [t for t in TASK_ORDER if any(c.task is t and c.mode is mode for c in table.cells)]
            width = 0.8 / max(len(archs), 1)
            for k, arch in enumerate(archs):
                xs, ys, es = [], [], []
                for i, t in enumerate(tasks):
                    c = table.get(t, mode, arch)
                    if c is not None:
                        xs.append(i + (k - (len(archs) - 1) / 2) * width)
                        ys.append(c.mean_mae)
                        es.append(c.std_mae)
                if xs:
                    ax.bar(xs, ys, width, yerr=es, capsize=2, label=arch,
                           color=PALETTE[k % len(PALETTE)], error_kw={"lw": 0.6})
            ax.set_xticks(range(len(tasks)))
            ax.set_xticklabels([TASK_LABELS[t] for t in tasks])
            ax.set_ylabel("MAE")
            ax.set_yscale("log")
            ax.set_title(f"{MODE_LABELS[mode]} mode")
        axes[0, 0].legend(ncol=min(len(archs), 4), frameon=False)
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_forecasts(series_values: Sequence[np.ndarray], forecasts: Sequence[np.ndarray],
                   path: str | Path, title: str = "", eval_start: int = 1000) -> Path:
    """History, ground truth and forecast for a handful of OOD series."""
    n = len(series_values)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(n, 1, figsize=(6.5, 1.6 * n), squeeze=False, sharex=True)
        for ax, y, f in zip(axes[:, 0], series_values, forecasts):
            t = np.arange(len(y))
            ax.plot(t[:eval_start], y[:eval_start], color="0.6", lw=0.8, label="history")
            ax.plot(t[eval_start:], y[eval_start:], color="k", lw=0.8, ls="--", label="target")
            ax.plot(np.arange(eval_start, eval_start + len(f)), f, color=PALETTE[1], lw=1.0, label="forecast")
            ax.axvline(eval_start, color="0.8", lw=0.6)
        axes[0, 0].legend(ncol=3, frameon=False, loc="upper left")
        if title:
            axes[0, 0].set_title(title)
        axes[-1, 0].set_xlabel("sample index")
        fig.tight_layout()
        return _save(fig, Path(path))
