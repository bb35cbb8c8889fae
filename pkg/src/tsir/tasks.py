"""Builders for the six reasoning tasks and their baseline-control variants."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .seriesgen import (
    FunctionFamily,
    Series,
    SeriesSpec,
    generate_series,
    linspace_params,
    write_series_csv,
)

# parameter ranges; the slope range depends on the task
AMP_RANGE = (1.0, 32.0)
FREQ_RANGE = (3.0, 32.0)
BASE_RANGE = (-32.0, 32.0)
SLOPE_RANGE_POS = (1.0, 32.0)
SLOPE_RANGE_SYM = (-32.0, 32.0)

TRAIN_REGION = (0, 1000)
EVAL_REGION = (1000, 1200)


class TaskId(str, enum.Enum):
    COMP_ADD = "CompAdd"
    COMP_SUB = "CompSub"
    COMP_MULT = "CompMult"
    COMP_FUNCTION = "CompFunction"
    COMPARISON = "Comparison"
    INVERSE_SEARCH = "InverseSearch"


class Mode(str, enum.Enum):
    TASK = "Task"
    BASELINE = "Baseline"


# stable command-line names
TASK_SLUGS = {
    "comp-add": TaskId.COMP_ADD,
    "comp-sub": TaskId.COMP_SUB,
    "comp-mult": TaskId.COMP_MULT,
    "comp-function": TaskId.COMP_FUNCTION,
    "comparison": TaskId.COMPARISON,
    "inverse": TaskId.INVERSE_SEARCH,
}
SLUG_OF = {v: k for k, v in TASK_SLUGS.items()}


@dataclass(frozen=True, eq=False)
class TaskDataset:
    task: TaskId
    id_series: tuple[Series, ...]
    ood_series: tuple[Series, ...]
    mode: Mode = Mode.TASK
    train_region: tuple[int, int] = TRAIN_REGION
    eval_region: tuple[int, int] = EVAL_REGION
    params: dict = field(default_factory=dict)

    @property
    def training_series(self) -> tuple[Series, ...]:
        """Series the trainer may draw from, given the mode."""
        return self.id_series if self.mode is Mode.TASK else self.ood_series

    def manifest(self) -> dict:
        return {
            "task": self.task.value,
            "mode": self.mode.value,
            "train_region": list(self.train_region),
            "eval_region": list(self.eval_region),
            "params": self.params,
            "id": [s.spec.to_record() for s in self.id_series],
            "ood": [s.spec.to_record() for s in self.ood_series],
        }


def _series(specs) -> tuple[Series, ...]:
    return tuple(generate_series(s) for s in specs)


def _component_specs(grid_n: int) -> tuple[list[SeriesSpec], list[SeriesSpec], np.ndarray, np.ndarray]:
    slopes = linspace_params(*SLOPE_RANGE_POS, grid_n)
    freqs = linspace_params(*FREQ_RANGE, grid_n)
    trends = [SeriesSpec(FunctionFamily.TREND, M=m) for m in slopes]
    seasons = [SeriesSpec(FunctionFamily.SEASONALITY, B=b) for b in freqs]
    return trends, seasons, freqs, slopes


def _composition(task: TaskId, family: FunctionFamily, grid_n: int) -> TaskDataset:
    if grid_n < 1:
        raise InvalidArgument(f"grid_n must be >= 1, got {grid_n}")
    trends, seasons, freqs, slopes = _component_specs(grid_n)
    ood = [SeriesSpec(family, B=b, M=m) for b in freqs for m in slopes]
    return TaskDataset(
        task, _series(trends + seasons), _series(ood), params={"grid_n": grid_n}
    )


def build_comp_add(grid_n: int = 30) -> TaskDataset:
    return _composition(TaskId.COMP_ADD, FunctionFamily.COMPOSITE_ADD, grid_n)


def build_comp_sub(grid_n: int = 30) -> TaskDataset:
    return _composition(TaskId.COMP_SUB, FunctionFamily.COMPOSITE_SUB, grid_n)


def build_comp_mult(grid_n: int = 30) -> TaskDataset:
    return _composition(TaskId.COMP_MULT, FunctionFamily.COMPOSITE_MULT, grid_n)


def _full_sine_grids(grid_n: int):
    return (
        linspace_params(*AMP_RANGE, grid_n),
        linspace_params(*FREQ_RANGE, grid_n),
        linspace_params(*BASE_RANGE, grid_n),
        linspace_params(*SLOPE_RANGE_SYM, grid_n),
    )


def _draw_tuples(grids, n: int, seed: int) -> list[tuple[float, float, float, float]]:
    """Draw ``n`` distinct 4-tuples from the product of ``grids`` (seeded)."""
    sizes = tuple(len(g) for g in grids)
    total = int(np.prod(sizes))
    if n > total:
        raise InvalidArgument(f"cannot draw {n} distinct tuples from a product of {total}")
    rng = np.random.default_rng(seed)
    flat = rng.permutation(total)[:n] if total <= 4_000_000 else rng.choice(total, n, replace=False)
    idx = np.unravel_index(flat, sizes)
    return [tuple(float(g[i[k]]) for g, i in zip(grids, idx)) for k in range(n)]


def build_comp_function(grid_n: int = 30, n_ood: int = 120, pairing_seed: int = 0) -> TaskDataset:
    if grid_n < 1:
        raise InvalidArgument(f"grid_n must be >= 1, got {grid_n}")
    amps, freqs, bases, slopes = grids = _full_sine_grids(grid_n)
    id_specs = (
        [SeriesSpec(FunctionFamily.AMPLITUDE_SINE, A=a) for a in amps]
        + [SeriesSpec(FunctionFamily.SEASONALITY, B=b) for b in freqs]
        + [SeriesSpec(FunctionFamily.BASELINE_SINE, C=c) for c in bases]
        + [SeriesSpec(FunctionFamily.TREND_SINE, M=m) for m in slopes]
    )
    ood_specs = [
        SeriesSpec(FunctionFamily.FULL_SINE, A=a, B=b, C=c, M=m)
        for a, b, c, m in _draw_tuples(grids, n_ood, pairing_seed)
    ]
    return TaskDataset(
        TaskId.COMP_FUNCTION,
        _series(id_specs),
        _series(ood_specs),
        params={"grid_n": grid_n, "n_ood": n_ood, "pairing_seed": pairing_seed},
    )


def extrapolate(lo: float, hi: float, margin: float, above: bool) -> float:
    span = hi - lo
    return hi + margin * span if above else lo - margin * span


_EXTRAP_CYCLE = [(p, above) for p in "ABCM" for above in (False, True)]


def build_comparison(
    n_id: int = 1200,
    n_ood: int = 120,
    margin: float = 0.25,
    grid_n: int = 30,
    pairing_seed: int = 0,
) -> TaskDataset:
    """In-range FullSine series for training; one coordinate pushed outside its range for OOD.

    The extrapolated coordinate cycles through A-below, A-above, B-below, ...,
    M-above so both sides of every range are covered evenly.
    """
    if margin <= 0:
        raise InvalidArgument(f"margin must be > 0, got {margin}")
    grids = _full_sine_grids(grid_n)
    ranges = dict(zip("ABCM", (AMP_RANGE, FREQ_RANGE, BASE_RANGE, SLOPE_RANGE_SYM)))
    id_specs = [
        SeriesSpec(FunctionFamily.FULL_SINE, A=a, B=b, C=c, M=m)
        for a, b, c, m in _draw_tuples(grids, n_id, pairing_seed)
    ]
    rng = np.random.default_rng([pairing_seed, 1])
    ood_specs = []
    for k in range(n_ood):
        name, above = _EXTRAP_CYCLE[k % len(_EXTRAP_CYCLE)]
        picks = rng.integers(0, grid_n, size=4)
        params = {p: float(g[i]) for p, g, i in zip("ABCM", grids, picks)}
        params[name] = extrapolate(*ranges[name], margin, above)
        ood_specs.append(SeriesSpec(FunctionFamily.FULL_SINE, **params))
    return TaskDataset(
        TaskId.COMPARISON,
        _series(id_specs),
        _series(ood_specs),
        params={"n_id": n_id, "n_ood": n_ood, "margin": margin, "grid_n": grid_n,
                "pairing_seed": pairing_seed},
    )


def build_inverse_search(grid_n: int = 30) -> TaskDataset:
    add = build_comp_add(grid_n)
    return TaskDataset(
        TaskId.INVERSE_SEARCH, add.ood_series, add.id_series, params={"grid_n": grid_n}
    )


def as_baseline(ds: TaskDataset) -> TaskDataset:
    """Control variant: train on the OOD series' own history, evaluate as before."""
    if ds.mode is not Mode.TASK:
        raise InvalidArgument(f"{ds.task.value} dataset is already in {ds.mode.value} mode")
    return replace(ds, mode=Mode.BASELINE)


BUILDERS = {
    TaskId.COMP_ADD: build_comp_add,
    TaskId.COMP_SUB: build_comp_sub,
    TaskId.COMP_MULT: build_comp_mult,
    TaskId.COMP_FUNCTION: build_comp_function,
    TaskId.COMPARISON: build_comparison,
    TaskId.INVERSE_SEARCH: build_inverse_search,
}


def build_task(task: TaskId, mode: Mode = Mode.TASK, **kwargs) -> TaskDataset:
    task = TaskId(task)
    ds = BUILDERS[task](**kwargs)
    return as_baseline(ds) if Mode(mode) is Mode.BASELINE else ds


def export_dataset(ds: TaskDataset, root: str | Path) -> Path:
    """Write ``manifest.json`` and ``<id|ood>/<index>.csv`` series files under ``root/<task>``."""
    out = Path(root) / SLUG_OF[ds.task]
    out.mkdir(parents=True, exist_ok=True)
    for split, items in (("id", ds.id_series), ("ood", ds.ood_series)):
        for i, s in enumerate(items):
            write_series_csv(s, out / split / f"{i}.csv")
    (out / "manifest.json").write_text(json.dumps(ds.manifest(), indent=1) + "\n")
    return out
