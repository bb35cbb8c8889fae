"""OOD forecasting, MAE, aggregation and report rendering."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import no_grad
from .errors import InvalidArgument
from .models import ARCH_ORDER, ModelInstance, forward
from .seriesgen import Series
from .tasks import EVAL_REGION, Mode, TaskId

log = logging.getLogger(__name__)

TASK_ORDER = tuple(TaskId)
MODE_ORDER = (Mode.TASK, Mode.BASELINE)
TASK_LABELS = {
    TaskId.COMP_ADD: "Add.",
    TaskId.COMP_SUB: "Sub.",
    TaskId.COMP_MULT: "Mult.",
    TaskId.COMP_FUNCTION: "Func.",
    TaskId.COMPARISON: "Comparison",
    TaskId.INVERSE_SEARCH: "Inverse Search",
}
MODE_LABELS = {Mode.TASK: "Task", Mode.BASELINE: "Base."}

# reported means for two headline cells, kept for annotation only
REFERENCE_MAE = {
    (TaskId.COMP_ADD, Mode.TASK, "DLinear"): 0.689,
    (TaskId.INVERSE_SEARCH, Mode.TASK, "NHITS"): 0.214,
}

RESULT_COLUMNS = ["task", "mode", "arch", "mean_mae", "std_mae", "n"]
RECORD_COLUMNS = ["task", "mode", "arch", "series_index", "mae"]


@dataclass(frozen=True)
class EvalRecord:
    task: TaskId
    mode: Mode
    arch: str
    series_index: int
    mae: float

    def __post_init__(self):
        object.__setattr__(self, "task", TaskId(self.task))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (math.isfinite(self.mae) and self.mae >= 0):
            raise InvalidArgument(f"mae must be finite and non-negative, got {self.mae}")


@dataclass(frozen=True)
class Cell:
    task: TaskId
    mode: Mode
    arch: str
    mean_mae: float
    std_mae: float
    n: int


@dataclass
class ResultTable:
    cells: list[Cell]

    def get(self, task, mode, arch) -> Cell | None:
        task, mode = TaskId(task), Mode(mode)
        for c in self.cells:
            if c.task is task and c.mode is mode and c.arch == arch:
                return c
        return None

    def archs(self) -> list[str]:
        return sorted({c.arch for c in self.cells}, key=arch_sort_key)


def arch_sort_key(label: str):
    """Registry order first, then patch-sweep variants by patch length."""
    base, _, patch = label.partition("[")
    order = [a.value for a in ARCH_ORDER]
    rank = order.index(base) if base in order else len(order)
    return (rank, base, int(patch.strip("p=]") or 0) if patch else -1)


def mae(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise InvalidArgument(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size < 1:
        raise InvalidArgument("empty horizon")
    return float(np.mean(np.abs(y - yhat)))


def ood_context(series: Series, model_input: int = 200) -> np.ndarray:
    t = EVAL_REGION[0]
    return series.values[t - model_input : t]


def ood_target(series: Series) -> np.ndarray:
    return series.values[EVAL_REGION[0] : EVAL_REGION[1]]


def forecast_ood(model: ModelInstance, series: Series | Sequence[Series]) -> np.ndarray:
    """Forecast samples [1000, 1200) from the context [800, 1000).

    Accepts one series or a sequence (forecast as a single batch).
    """
    if not model.trained:
        raise InvalidArgument("refusing to forecast with an untrained model")
    many = not isinstance(series, Series)
    items = list(series) if many else [series]
    for s in items:
        if len(s) < EVAL_REGION[1]:
            raise InvalidArgument(f"series has {len(s)} samples, need {EVAL_REGION[1]}")
    ctx = np.stack([ood_context(s, model.config.input_size) for s in items])
    with no_grad():
        out = forward(model, ctx).data
    return out if many else out[0]


def score_forecasts(task, mode, arch_label: str, ood: Sequence[Series], forecasts,
                    start: int = 0) -> list[EvalRecord]:
    """One record per series comparing its forecast with samples [1000, 1200)."""
    if len(forecasts) != len(ood):
        raise InvalidArgument(f"{len(forecasts)} forecasts for {len(ood)} series")
    return [
        EvalRecord(task, mode, arch_label, start + j, mae(ood_target(s), f))
        for j, (s, f) in enumerate(zip(ood, forecasts))
    ]


def evaluate_ood(model: ModelInstance, task, mode, arch_label: str, ood: Sequence[Series],
                 chunk: int = 256) -> list[EvalRecord]:
    records = []
    for i in range(0, len(ood), chunk):
        batch = ood[i : i + chunk]
        records += score_forecasts(task, mode, arch_label, batch, forecast_ood(model, batch), start=i)
    return records


def aggregate(records: Iterable[EvalRecord]) -> ResultTable:
    """Mean and population standard deviation per (task, mode, arch) cell."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.task, r.mode, r.arch), []).append(r.mae)
    cells = []
    for (task, mode, arch), vals in groups.items():
        if not vals:
            log.warning("empty cell %s/%s/%s omitted", task.value, mode.value, arch)
            continue
        arr = np.asarray(vals)
        m = math.fsum(vals) / len(vals)
        m = min(max(m, float(arr.min())), float(arr.max()))
        # deviations are scaled before squaring so huge (finite) errors cannot overflow
        dev = [v - m for v in vals]
        scale = max(abs(d) for d in dev)
        sd = scale * math.sqrt(math.fsum((d / scale) ** 2 for d in dev) / len(vals)) if scale else 0.0
        cells.append(Cell(task, mode, arch, m, sd, len(vals)))
    cells.sort(key=lambda c: (TASK_ORDER.index(c.task), MODE_ORDER.index(c.mode), arch_sort_key(c.arch)))
    return ResultTable(cells)


def write_records(records: Sequence[EvalRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.task.value, r.mode.value, r.arch, r.series_index, repr(r.mae)])


def read_records(path: str | Path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        return [
            EvalRecord(TaskId(row["task"]), Mode(row["mode"]), row["arch"], int(row["series_index"]), float(row["mae"]))
            for row in csv.DictReader(fh)
        ]


def write_results_csv(table: ResultTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for c in table.cells:
            w.writerow([c.task.value, c.mode.value, c.arch, repr(c.mean_mae), repr(c.std_mae), c.n])


def read_results_csv(path: str | Path) -> ResultTable:
    with open(path, newline="") as fh:
        return ResultTable([
            Cell(TaskId(r["task"]), Mode(r["mode"]), r["arch"], float(r["mean_mae"]), float(r["std_mae"]), int(r["n"]))
            for r in csv.DictReader(fh)
        ])


def render_markdown(table: ResultTable) -> str:
    """Rows are architectures, columns are (task, mode) pairs; best mean per column in bold."""
    columns = [(t, m) for t in TASK_ORDER for m in MODE_ORDER if any(
        c.task is t and c.mode is m for c in table.cells)]
    header = "| Model | " + " | ".join(f"{TASK_LABELS[t]} {MODE_LABELS[m]}" for t, m in columns) + " |"
    lines = [header, "|" + "---|" * (len(columns) + 1)]
    best = {}
    for col in columns:
        vals = [c.mean_mae for c in table.cells if (c.task, c.mode) == col]
        best[col] = min(vals)
    for arch in table.archs():
        row = [arch]
        for t, m in columns:
            c = table.get(t, m, arch)
            if c is None:
                row.append("-")
                continue
            txt = f"{c.mean_mae:.3f} ({c.std_mae:.3f})"
            row.append(f"**{txt}**" if c.mean_mae == best[(t, m)] else txt)
        lines.append("| " + " | ".join(row) + " |")
    notes = [
        f"- {TASK_LABELS[t]} {MODE_LABELS[m]} / {a}: reported reference mean {v}"
        for (t, m, a), v in REFERENCE_MAE.items() if table.get(t, m, a) is not None
    ]
    if notes:
        lines += ["", "Reference values (annotation only):", *notes]
    return "\n".join(lines) + "\n"


def render_report(table: ResultTable, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write ``results.csv``, ``results.md`` and (optionally) summary figures into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(table, out / "results.csv")
    (out / "results.md").write_text(render_markdown(table))
    written = [out / "results.csv", out / "results.md"]
    if figures and table.cells:
        from .plotting import plot_mae_bars

        written.append(plot_mae_bars(table, out / "mae_by_task.png"))
    return written
