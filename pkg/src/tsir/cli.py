"""Command-line entry point: generate data, train and evaluate runs, assemble reports."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .autodiff import save_checkpoint
from .errors import InvalidArgument, NumericError
from .evaluator import (
    EvalRecord,
    ResultTable,
    aggregate,
    evaluate_ood,
    forecast_ood,
    read_records,
    render_report,
    write_records,
)
from .models import ARCH_ORDER, ARCH_SLUGS, PATCH_GRID, Arch, ModelConfig, init_params
from .tasks import SLUG_OF, TASK_SLUGS, Mode, TaskId, build_task, export_dataset
from .trainer import TrainConfig, train

log = logging.getLogger("tsir")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SCALES = ("tiny", "paper")
MODE_SLUGS = {"task": Mode.TASK, "baseline": Mode.BASELINE}


class UsageError(Exception):
    pass


# builder keyword arguments per scale; paper scale uses the builder defaults
TINY_DATA = {
    TaskId.COMP_ADD: {"grid_n": 10},
    TaskId.COMP_SUB: {"grid_n": 10},
    TaskId.COMP_MULT: {"grid_n": 10},
    TaskId.COMP_FUNCTION: {"grid_n": 10},
    TaskId.COMPARISON: {"grid_n": 10, "n_id": 120, "n_ood": 24},
    TaskId.INVERSE_SEARCH: {"grid_n": 10},
}
TINY_TRAIN = {"max_steps": 500}
# patch length 1 gives 200 attention tokens; at tiny scale the whole sweep
# shares a smaller step batch and a thinned validation set to stay CI-sized
TINY_SWEEP_TRAIN = {"windows_batch": 16, "val_stride": 20}
# the tiny matrix leaves PatchTST to the patch sweep
TINY_ARCHS = (Arch.MLP, Arch.DLINEAR, Arch.NHITS)


@dataclass(frozen=True)
class Job:
    """One (task, mode, model) training and evaluation unit."""

    task: TaskId
    mode: Mode
    label: str
    data_kw: dict
    model: ModelConfig
    train: TrainConfig

    def numerics(self) -> dict:
        return {
            "task": self.task.value,
            "mode": self.mode.value,
            "label": self.label,
            "data": dict(sorted(self.data_kw.items())),
            "model": self.model.to_json(),
            "train": self.train.to_json(),
        }

    def config_hash(self) -> str:
        return config_hash({"version": __version__, **self.numerics()})

    def run_dir(self, root: Path) -> Path:
        slug = self.label.lower().replace("[p=", "-p").rstrip("]")
        return root / "runs" / SLUG_OF[self.task] / self.mode.value.lower() / slug


@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    tasks: list[str]
    archs: list[str]
    modes: list[str]
    seed: int
    started: str
    finished: str = ""
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


# argument parsing


def _split(value: str | None) -> list[str]:
    return [v.strip().lower() for v in (value or "").split(",") if v.strip()]


def parse_tasks(value: str | None) -> list[TaskId]:
    names = _split(value) or ["all"]
    if names == ["all"]:
        return list(TaskId)
    bad = [n for n in names if n not in TASK_SLUGS]
    if bad:
        raise UsageError(f"unknown task {bad[0]!r}; choose from {', '.join(TASK_SLUGS)} or all")
    return [TASK_SLUGS[n] for n in names]


def parse_archs(value: str | None) -> list[Arch]:
    names = _split(value) or ["all"]
    if names == ["all"]:
        return list(ARCH_ORDER)
    bad = [n for n in names if n not in ARCH_SLUGS]
    if bad:
        raise UsageError(f"unknown arch {bad[0]!r}; choose from {', '.join(ARCH_SLUGS)} or all")
    return [ARCH_SLUGS[n] for n in names]


def parse_modes(value: str | None) -> list[Mode]:
    names = _split(value) or ["task"]
    if names == ["all"]:
        return list(MODE_SLUGS.values())
    bad = [n for n in names if n not in MODE_SLUGS]
    if bad:
        raise UsageError(f"unknown mode {bad[0]!r}; choose from task, baseline or all")
    return [MODE_SLUGS[n] for n in names]


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def merge_settings(args: argparse.Namespace, file_cfg: dict) -> dict:
    """Flags override the config file, which overrides the defaults."""
    keys = ("task", "arch", "mode", "seed", "sweep_patch", "out", "scale", "jobs")
    merged = {k: file_cfg.get(k, file_cfg.get(k.replace("_", "-"))) for k in keys}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            merged[k] = v
    for k in ("model", "train", "data"):
        merged[k] = dict(file_cfg.get(k) or {})
    if isinstance(merged["task"], list):
        merged["task"] = ",".join(merged["task"])
    if isinstance(merged["arch"], list):
        merged["arch"] = ",".join(merged["arch"])
    if isinstance(merged["mode"], list):
        merged["mode"] = ",".join(merged["mode"])
    merged["seed"] = 0 if merged["seed"] is None else int(merged["seed"])
    merged["jobs"] = 1 if merged["jobs"] is None else int(merged["jobs"])
    merged["scale"] = merged["scale"] or "paper"
    merged["sweep_patch"] = bool(merged["sweep_patch"])
    merged["out"] = Path(merged["out"] or os.environ.get("TSIR_OUT") or "out")
    if merged["scale"] not in SCALES:
        raise UsageError(f"scale must be one of {', '.join(SCALES)}")
    return merged


# planning


def plan_jobs(tasks, archs, modes, seed: int, scale: str, sweep_patch: bool,
              model_kw: dict | None = None, train_kw: dict | None = None,
              data_kw: dict | None = None) -> list[Job]:
    model_kw, train_kw, data_kw = dict(model_kw or {}), dict(train_kw or {}), dict(data_kw or {})
    for name, kw, cls in (("model", model_kw, ModelConfig), ("train", train_kw, TrainConfig)):
        unknown = set(kw) - {f.name for f in fields(cls)} - {"arch"}
        if unknown:
            raise UsageError(f"unknown {name} setting(s): {', '.join(sorted(unknown))}")
    bad = set(data_kw) - set(TASK_SLUGS)
    if bad:
        raise UsageError(f"data settings keyed by unknown task(s): {', '.join(sorted(bad))}")
    model_kw.pop("arch", None)
    jobs = []
    for task in tasks:
        dkw = dict(TINY_DATA[task]) if scale == "tiny" else {}
        dkw.update(data_kw.get(SLUG_OF[task], {}))
        for mode in modes:
            for arch in archs:
                tkw = {**(TINY_TRAIN if scale == "tiny" else {}), **train_kw, "seed": seed}
                if arch is Arch.PATCHTST and sweep_patch:
                    if scale == "tiny":
                        tkw = {**tkw, **TINY_SWEEP_TRAIN, **train_kw, "seed": seed}
                    for p in PATCH_GRID:
                        cfg = ModelConfig(arch, **{**model_kw, "patch_length": p, "seed": seed})
                        jobs.append(Job(task, mode, f"{arch.value}[p={p}]", dkw, cfg, TrainConfig(**tkw)))
                else:
                    cfg = ModelConfig(arch, **{**model_kw, "seed": seed})
                    jobs.append(Job(task, mode, arch.value, dkw, cfg, TrainConfig(**tkw)))
    return jobs


def desk_suite_jobs(scale: str, seed: int = 0) -> list[Job]:
    if scale == "tiny":
        jobs = plan_jobs(list(TaskId), TINY_ARCHS, list(Mode), seed, "tiny", False)
        return jobs + plan_jobs([TaskId.COMP_ADD], [Arch.PATCHTST], [Mode.TASK], seed, "tiny", True)
    jobs = plan_jobs(list(TaskId), ARCH_ORDER, list(Mode), seed, "paper", False)
    return jobs + plan_jobs([TaskId.COMP_ADD], [Arch.PATCHTST], [Mode.TASK], seed, "paper", True)


# execution


def _write_atomic_dir(final: Path, fill) -> None:
    """Build a directory in a sibling temp dir, then swap it into place."""
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    try:
        fill(tmp)
        if final.exists():
            old = final.with_name(f".{final.name}.old")
            shutil.rmtree(old, ignore_errors=True)
            final.rename(old)
            tmp.rename(final)
            shutil.rmtree(old, ignore_errors=True)
        else:
            tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


# Training is deterministic in (training data, model config, train config), and
# several cells share all three (e.g. the three composition tasks in task mode).
# Trained weights are memoised per process so such cells are trained once.
_TRAINED: dict[str, tuple[dict, object]] = {}


def training_key(ds, job: Job) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([list(ds.train_region), job.model.to_json(), asdict(job.train)],
                        sort_keys=True, default=str).encode())
    for s in ds.training_series:
        h.update(s.values.tobytes())
    return h.hexdigest()


def _train_cached(ds, job: Job):
    key = training_key(ds, job)
    model = init_params(job.model)
    if key in _TRAINED:
        arrays, report = _TRAINED[key]
        model.load(arrays)
        model.trained = True
        return model, report
    model, report = train(model, ds, job.train)
    _TRAINED[key] = (model.snapshot(), report)
    return model, report


def execute_job(job: Job, root: Path, figures: bool = True) -> list[EvalRecord]:
    """Train, evaluate and persist one job; returns its per-series records."""
    ds = build_task(job.task, job.mode, **job.data_kw)
    t0 = time.perf_counter()
    model, report = _train_cached(ds, job)
    records = evaluate_ood(model, job.task, job.mode, job.label, ds.ood_series)
    elapsed = time.perf_counter() - t0

    def fill(d: Path):
        save_checkpoint(model.params, d / "params.bin", meta={"config_hash": job.config_hash()})
        (d / "model.json").write_text(json.dumps(job.model.to_json(), indent=1) + "\n")
        meta = {"config_hash": job.config_hash(), "tool_version": __version__, **job.numerics(),
                "n_params": model.n_params, "training": report.to_json()}
        (d / "report.json").write_text(json.dumps(meta, indent=1) + "\n")
        write_records(records, d / "records.csv")
        if figures:
            from .plotting import plot_forecasts

            shown = ds.ood_series[:3]
            plot_forecasts([s.values for s in shown], list(forecast_ood(model, shown)),
                           d / "forecast.png", title=f"{job.label} / {SLUG_OF[job.task]} / {job.mode.value}")

    _write_atomic_dir(job.run_dir(root), fill)
    log.info("%s %s %s: %d steps, best val %.4g, %.1fs", SLUG_OF[job.task], job.mode.value,
             job.label, report.steps_run, report.best_val_loss or float("nan"), elapsed)
    return records


def _job_worker(args):
    job, root, figures = args
    try:
        return job, execute_job(job, root, figures), None
    except NumericError as exc:
        return job, [], f"numeric: {exc}"


def run_jobs(jobs: list[Job], root: Path, n_jobs: int = 1, figures: bool = True):
    """Run jobs (optionally in worker processes); a failing job leaves other runs intact."""
    results = []
    payload = [(j, root, figures) for j in jobs]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_job_worker, payload))
    else:
        results = [_job_worker(p) for p in payload]
    records, failures = [], []
    for job, recs, err in results:
        records.extend(recs)
        if err:
            failures.append(f"{SLUG_OF[job.task]}/{job.mode.value}/{job.label}: {err}")
    return records, failures


def collect_records(root: Path) -> list[EvalRecord]:
    """Records of every completed run under ``root/runs`` in a stable order."""
    runs = root / "runs"
    paths = sorted(p for p in runs.glob("*/*/*/records.csv")) if runs.is_dir() else []
    out = []
    for p in paths:
        out.extend(read_records(p))
    return out


def build_report(root: Path, figures: bool = True) -> ResultTable:
    records = collect_records(root)
    if not records:
        raise UsageError(f"no completed runs under {root / 'runs'}")
    table = aggregate(records)
    render_report(table, root / "reports", figures=figures)
    return table


# acceptance summary for the directional checks


def acceptance_lines(table: ResultTable) -> list[str]:
    def cell(task, mode, arch):
        c = table.get(task, mode, arch)
        return None if c is None else c.mean_mae

    def line(name, ok, detail, soft=False):
        tag = "PASS" if ok else ("WARN" if soft else "FAIL")
        if ok is None:
            tag = "SKIP"
        return f"{tag} {name}: {detail}"

    out = []
    dl, ml = cell(TaskId.COMP_ADD, Mode.TASK, "DLinear"), cell(TaskId.COMP_ADD, Mode.TASK, "MLP")
    ok = None if dl is None or ml is None else (dl < ml and dl <= 1.5)
    out.append(line("comp-add DLinear < MLP and <= 1.5", ok, f"DLinear={dl} MLP={ml}"))
    nh, dli = cell(TaskId.INVERSE_SEARCH, Mode.TASK, "NHITS"), cell(TaskId.INVERSE_SEARCH, Mode.TASK, "DLinear")
    ok = None if nh is None or dli is None else (nh < dli and nh <= 0.6)
    out.append(line("inverse NHITS < DLinear and <= 0.6", ok, f"NHITS={nh} DLinear={dli}"))
    for arch in ("DLinear", "NHITS"):
        b, t = cell(TaskId.COMP_ADD, Mode.BASELINE, arch), cell(TaskId.COMP_ADD, Mode.TASK, arch)
        ok = None if b is None or t is None else b <= t
        out.append(line(f"comp-add {arch} baseline <= task", ok, f"baseline={b} task={t}"))
    sweep = [cell(TaskId.COMP_ADD, Mode.TASK, f"PatchTST[p={p}]") for p in PATCH_GRID]
    if any(v is None for v in sweep):
        out.append(line("patch sweep max/min >= 1.2", None, "sweep incomplete", soft=True))
    else:
        ratio = max(sweep) / min(sweep)
        out.append(line("patch sweep max/min >= 1.2", ratio >= 1.2, f"ratio={ratio:.4f} rows={len(sweep)}", soft=True))
    return out


# commands


def cmd_generate(s: dict) -> int:
    root = s["out"] / "data"
    for task in parse_tasks(s["task"]):
        dkw = dict(TINY_DATA[task]) if s["scale"] == "tiny" else {}
        dkw.update(s["data"].get(SLUG_OF[task], {}))
        path = export_dataset(build_task(task, Mode.TASK, **dkw), root)
        print(f"wrote {path}")
    return EXIT_OK


def _run_and_record(jobs: list[Job], s: dict, tasks, archs, modes) -> int:
    root = s["out"]
    manifest = RunManifest(
        tool_version=__version__,
        config_hash=config_hash([j.config_hash() for j in jobs]),
        tasks=[SLUG_OF[t] for t in tasks],
        archs=[a.value for a in archs],
        modes=[m.value for m in modes],
        seed=s["seed"],
        started=_now(),
    )
    records, failures = run_jobs(jobs, root, s["jobs"])
    manifest.finished, manifest.failures = _now(), failures
    for f in failures:
        print(f"tsir: run failed: {f}", file=sys.stderr)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(json.dumps(manifest.to_json(), indent=1) + "\n")
    table = aggregate(records) if records else ResultTable([])
    for c in table.cells:
        print(f"{SLUG_OF[c.task]},{c.mode.value},{c.arch},{c.mean_mae!r},{c.std_mae!r},{c.n}")
    return EXIT_NUMERIC if failures else EXIT_OK


def cmd_run(s: dict) -> int:
    tasks, archs, modes = parse_tasks(s["task"]), parse_archs(s["arch"]), parse_modes(s["mode"])
    jobs = plan_jobs(tasks, archs, modes, s["seed"], s["scale"], s["sweep_patch"],
                     s["model"], s["train"], s["data"])
    return _run_and_record(jobs, s, tasks, archs, modes)


def cmd_report(s: dict) -> int:
    build_report(s["out"])
    print((s["out"] / "reports" / "results.md").read_text(), end="")
    return EXIT_OK


def cmd_desk_suite(s: dict) -> int:
    scale = s["scale"]
    jobs = desk_suite_jobs(scale, s["seed"])
    for task in TaskId:
        dkw = dict(TINY_DATA[task]) if scale == "tiny" else {}
        export_dataset(build_task(task, Mode.TASK, **dkw), s["out"] / "data")
    archs = TINY_ARCHS + (Arch.PATCHTST,) if scale == "tiny" else ARCH_ORDER
    code = _run_and_record(jobs, s, list(TaskId), archs, list(Mode))
    table = build_report(s["out"])
    lines = acceptance_lines(table)
    (s["out"] / "reports" / "acceptance.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsir", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output root (default: $TSIR_OUT or ./out)")
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="concurrent runs (default 1)")
    selection = argparse.ArgumentParser(add_help=False)
    selection.add_argument("--task", help="comma list of task slugs, or all")
    selection.add_argument("--scale", choices=SCALES, help="data and training scale (default paper)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common, selection], help="write dataset CSVs under data/")
    run = sub.add_parser("run", parents=[common, selection], help="train and evaluate runs under runs/")
    run.add_argument("--arch", help="comma list of mlp, dlinear, nhits, patchtst, or all")
    run.add_argument("--mode", help="comma list of task, baseline, or all (default task)")
    run.add_argument("--sweep-patch", action="store_true", help="run PatchTST once per grid patch length")
    sub.add_parser("report", parents=[common], help="aggregate runs/ into reports/")
    desk = sub.add_parser("desk-suite", parents=[common], help="full pipeline plus acceptance summary")
    desk.add_argument("scale", choices=SCALES)
    return parser


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "report": cmd_report, "desk-suite": cmd_desk_suite}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        s = merge_settings(args, load_config(args.config))
        if s["jobs"] < 1:
            raise UsageError("--jobs must be >= 1")
        return COMMANDS[args.command](s)
    except UsageError as exc:
        print(f"tsir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"tsir: error: invalid setting: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"tsir: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"tsir: I/O error{where}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
