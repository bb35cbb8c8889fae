"""Windowed training with validation-based early stopping."""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import AdamState, adam_step, backward, mae_loss, mse_loss, no_grad, recording
from .errors import InvalidArgument, NumericError
from .models import ModelInstance, forward
from .seriesgen import Series
from .tasks import Mode, TaskDataset

log = logging.getLogger(__name__)


class StopReason(str, enum.Enum):
    EARLY = "early"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_series: int = 4
    windows_batch: int = 256
    max_steps: int = 2000
    val_check_every: int = 50
    patience: int = 5
    loss: str = "MAE"
    seed: int = 0
    val_tail: int = 200
    # every val_stride-th validation window is scored (1 = all of them)
    val_stride: int = 1
    # windows per forward pass during validation; numerics do not depend on it
    eval_chunk: int = 512

    def __post_init__(self):
        if self.loss.upper() not in ("MAE", "MSE"):
            raise InvalidArgument(f"loss must be MAE or MSE, got {self.loss}")
        for name in ("batch_series", "windows_batch", "val_check_every", "patience", "val_stride", "eval_chunk"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.lr <= 0 or self.max_steps < 0 or self.val_tail < 0:
            raise InvalidArgument("lr must be positive; max_steps and val_tail non-negative")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Window:
    series_index: int
    start: int
    context: np.ndarray
    target: np.ndarray


@dataclass
class TrainReport:
    steps_run: int = 0
    best_val_loss: float | None = None
    best_step: int | None = None
    stop_reason: StopReason = StopReason.MAX_STEPS
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[tuple[int, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "steps_run": self.steps_run,
            "best_val_loss": self.best_val_loss,
            "best_step": self.best_step,
            "stop_reason": self.stop_reason.value,
            "train_curve": self.train_curve,
            "val_curve": [list(v) for v in self.val_curve],
        }


def window_starts(region: tuple[int, int], L: int = 200, H: int = 200) -> np.ndarray:
    lo, hi = region
    if hi - lo < L + H:
        raise InvalidArgument(f"region {region} shorter than context+horizon ({L + H})")
    return np.arange(lo, hi - L - H + 1)


def make_windows(series: Series | np.ndarray, region: tuple[int, int], L: int = 200, H: int = 200,
                 series_index: int = 0) -> list[Window]:
    """All stride-1 windows whose context and target both fit inside ``region``."""
    values = series.values if isinstance(series, Series) else np.asarray(series)
    return [
        Window(series_index, int(s), values[s : s + L], values[s + L : s + L + H])
        for s in window_starts(region, L, H)
    ]


def split_train_val(windows: list[Window], region_end: int, val_tail: int = 200,
                    L: int = 200, H: int = 200) -> tuple[list[Window], list[Window]]:
    """Validation = windows whose last target sample falls in the final ``val_tail`` samples.

    If that leaves no validation window, the last window alone is used.
    """
    if not windows:
        raise InvalidArgument("no windows to split")
    cut = region_end - val_tail
    val = [w for w in windows if w.start + L + H - 1 >= cut]
    if not val:
        val = [windows[-1]]
    val_ids = {id(w) for w in val}
    train = [w for w in windows if id(w) not in val_ids]
    return train, val


def _split_starts(region, val_tail, L, H):
    ws = [Window(0, int(s), None, None) for s in window_starts(region, L, H)]
    tr, va = split_train_val(ws, region[1], val_tail, L, H)
    return np.array([w.start for w in tr], dtype=np.int64), np.array([w.start for w in va], dtype=np.int64)


def _gather(data: np.ndarray, rows: np.ndarray, starts: np.ndarray, L: int, H: int):
    idx = starts[:, None] + np.arange(L + H)[None, :]
    block = data[rows[:, None], idx]
    return block[:, :L], block[:, L:]


class _Evaluator:
    """Deterministic full-validation loss over fixed (series, start) pairs."""

    def __init__(self, model, data, rows, starts, cfg, loss_fn):
        self.model, self.data, self.rows, self.starts = model, data, rows, starts
        self.cfg, self.loss_fn = cfg, loss_fn
        c = model.config
        self.L, self.H = c.input_size, c.horizon

    def __call__(self) -> float:
        total, n = 0.0, len(self.rows)
        with no_grad():
            for i in range(0, n, self.cfg.eval_chunk):
                rows, starts = self.rows[i : i + self.cfg.eval_chunk], self.starts[i : i + self.cfg.eval_chunk]
                ctx, tgt = _gather(self.data, rows, starts, self.L, self.H)
                pred = forward(self.model, ctx)
                total += float(self.loss_fn(pred, tgt).data) * len(rows)
        return total / n


def train(model: ModelInstance, ds: TaskDataset, cfg: TrainConfig = TrainConfig()) -> tuple[ModelInstance, TrainReport]:
    """Train ``model`` in place on ``ds.training_series`` and restore the best snapshot."""
    L, H = model.config.input_size, model.config.horizon
    series = ds.training_series
    if ds.mode is Mode.TASK:
        id_ids = {id(s) for s in ds.id_series}
        if any(id(s) not in id_ids for s in series):
            raise RuntimeError("task-mode training set contains a non-ID series")
    if not series:
        raise InvalidArgument("dataset has no training series")
    data = np.stack([s.values for s in series])
    region = ds.train_region
    if region[1] > data.shape[1]:
        raise InvalidArgument(f"training region {region} exceeds series length {data.shape[1]}")
    tr_starts, va_starts = _split_starts(region, cfg.val_tail, L, H)
    if len(tr_starts) == 0:
        tr_starts = va_starts
    va_starts = va_starts[:: cfg.val_stride]
    n_series = len(series)
    val_rows = np.repeat(np.arange(n_series), len(va_starts))
    val_starts = np.tile(va_starts, n_series)

    loss_fn = mae_loss if cfg.loss.upper() == "MAE" else mse_loss
    evaluate = _Evaluator(model, data, val_rows, val_starts, cfg, loss_fn)
    order = np.random.default_rng([cfg.seed, 0]).permutation(n_series)
    report = TrainReport()
    state = AdamState()
    best = model.snapshot()
    bad_checks = 0

    def check(step: int) -> bool:
        nonlocal best, bad_checks
        val = evaluate()
        if not np.isfinite(val):
            raise NumericError(f"non-finite validation loss at step {step}")
        report.val_curve.append((step, val))
        if report.best_val_loss is None or val < report.best_val_loss:
            report.best_val_loss, report.best_step = val, step
            best = model.snapshot()
            bad_checks = 0
        else:
            bad_checks += 1
        return bad_checks >= cfg.patience

    step = 0
    last_checked = 0
    while step < cfg.max_steps:
        pick = order[(step * cfg.batch_series + np.arange(cfg.batch_series)) % n_series]
        pick = np.unique(pick)
        rows = np.repeat(pick, len(tr_starts))
        starts = np.tile(tr_starts, len(pick))
        rng = np.random.default_rng([cfg.seed, 1, step])
        if len(rows) > cfg.windows_batch:
            sel = np.sort(rng.choice(len(rows), cfg.windows_batch, replace=False))
            rows, starts = rows[sel], starts[sel]
        ctx, tgt = _gather(data, rows, starts, L, H)
        try:
            with recording():
                loss = loss_fn(forward(model, ctx), tgt)
                grads = backward(loss)
            named = {name: grads[p] for name, p in model.params.items() if p in grads}
            for p in model.params.values():
                p.grad = None
            _, state = adam_step(model.params, named, state, lr=cfg.lr)
        except NumericError as exc:
            raise NumericError(f"step {step}, series {pick.tolist()}: {exc}") from exc
        step += 1
        report.train_curve.append(float(loss.data))
        if step % cfg.val_check_every == 0:
            last_checked = step
            if check(step):
                report.stop_reason = StopReason.EARLY
                break
    if step > 0 and last_checked != step:
        check(step)
    report.steps_run = step
    model.load(best)
    model.trained = True
    log.debug("trained %s for %d steps (%s), best val %.6g",
              model.config.arch.value, step, report.stop_reason.value, report.best_val_loss or float("nan"))
    return model, report


def validation_loss(model: ModelInstance, ds: TaskDataset, cfg: TrainConfig = TrainConfig()) -> float:
    """Recompute the trainer's validation loss for the model's current parameters."""
    L, H = model.config.input_size, model.config.horizon
    data = np.stack([s.values for s in ds.training_series])
    _, va = _split_starts(ds.train_region, cfg.val_tail, L, H)
    va = va[:: cfg.val_stride]
    rows = np.repeat(np.arange(len(data)), len(va))
    starts = np.tile(va, len(data))
    loss_fn = mae_loss if cfg.loss.upper() == "MAE" else mse_loss
    return _Evaluator(model, data, rows, starts, cfg, loss_fn)()
