import json

import numpy as np
import pytest

from tsir import cli
from tsir.autodiff import load_checkpoint
from tsir.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, Job, main, plan_jobs
from tsir.models import PATCH_GRID, Arch, ModelConfig
from tsir.tasks import Mode, TaskId
from tsir.trainer import TrainConfig

FAST = {"model": {"hidden_size": 8, "ff_dim": 8, "n_heads": 2},
        "train": {"max_steps": 2, "windows_batch": 4, "val_stride": 100},
        "data": {"comp-add": {"grid_n": 2}, "inverse": {"grid_n": 2}}}


@pytest.fixture(autouse=True)
def fresh_cache():
    cli._TRAINED.clear()
    yield
    cli._TRAINED.clear()


def write_cfg(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**FAST, **extra}))
    return str(path)


def rows(out: str) -> list[list[str]]:
    return [line.split(",") for line in out.splitlines() if line.count(",") == 5]


# generate


def test_generate_comp_add_file_count(tmp_path):
    assert main(["generate", "--task", "comp-add", "--out", str(tmp_path)]) == EXIT_OK
    root = tmp_path / "data" / "comp-add"
    assert len(list(root.glob("*/*.csv"))) == 60 + 900


def test_generate_all_and_idempotent(tmp_path):
    assert main(["generate", "--task", "all", "--scale", "tiny", "--out", str(tmp_path)]) == EXIT_OK
    dirs = sorted(p.name for p in (tmp_path / "data").iterdir())
    assert dirs == sorted(["comp-add", "comp-sub", "comp-mult", "comp-function", "comparison", "inverse"])
    before = {p: p.read_bytes() for p in (tmp_path / "data").rglob("*") if p.is_file()}
    main(["generate", "--task", "all", "--scale", "tiny", "--out", str(tmp_path)])
    after = {p: p.read_bytes() for p in (tmp_path / "data").rglob("*") if p.is_file()}
    assert before == after


def test_generate_honours_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("TSIR_OUT", str(tmp_path / "env"))
    assert main(["generate", "--task", "inverse", "--config", write_cfg(tmp_path)]) == EXIT_OK
    assert (tmp_path / "env" / "data" / "inverse" / "manifest.json").is_file()


def test_unwritable_out_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["generate", "--task", "comp-add", "--out", str(blocker / "sub")]) == EXIT_IO
    assert str(blocker) in capsys.readouterr().err


# run


def test_run_single_row(tmp_path, capsys):
    code = main(["run", "--task", "comp-add", "--arch", "dlinear", "--mode", "task",
                 "--config", write_cfg(tmp_path), "--out", str(tmp_path)])
    assert code == EXIT_OK
    got = rows(capsys.readouterr().out)
    assert len(got) == 1 and got[0][:3] == ["comp-add", "Task", "DLinear"] and got[0][5] == "4"
    run = tmp_path / "runs" / "comp-add" / "task" / "dlinear"
    assert {p.name for p in run.iterdir()} == {"params.bin", "model.json", "report.json", "records.csv", "forecast.png"}
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["tasks"] == ["comp-add"] and man["failures"] == [] and man["seed"] == 0


def test_run_patch_sweep_five_rows(tmp_path, capsys):
    code = main(["run", "--task", "comp-add", "--arch", "patchtst", "--sweep-patch",
                 "--config", write_cfg(tmp_path), "--out", str(tmp_path)])
    assert code == EXIT_OK
    got = rows(capsys.readouterr().out)
    assert [r[2] for r in got] == [f"PatchTST[p={p}]" for p in PATCH_GRID]
    runs = sorted(p.name for p in (tmp_path / "runs" / "comp-add" / "task").iterdir())
    assert runs == sorted(f"patchtst-p{p}" for p in PATCH_GRID)


def test_run_inverse_all_archs_both_modes(tmp_path, capsys):
    code = main(["run", "--task", "inverse", "--arch", "all", "--mode", "task,baseline",
                 "--config", write_cfg(tmp_path), "--out", str(tmp_path)])
    assert code == EXIT_OK
    got = rows(capsys.readouterr().out)
    assert len(got) == 8
    assert {(r[1], r[2]) for r in got} == {(m, a) for m in ("Task", "Baseline")
                                           for a in ("MLP", "DLinear", "NHITS", "PatchTST")}


def test_flags_override_config(tmp_path):
    cfg = write_cfg(tmp_path, seed=5, arch="mlp")
    assert main(["run", "--task", "comp-add", "--arch", "dlinear", "--seed", "7",
                 "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 7 and man["archs"] == ["DLinear"]


def test_numeric_failure_exit_and_isolation(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", "--task", "comp-add", "--arch", "dlinear", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    good = tmp_path / "runs" / "comp-add" / "task" / "dlinear"
    snapshot = {p.name: p.read_bytes() for p in good.iterdir()}
    blowup = write_cfg(tmp_path, train={**FAST["train"], "lr": 1e300, "max_steps": 5})
    code = main(["run", "--task", "comp-add", "--arch", "mlp", "--config", blowup, "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert "non-finite" in capsys.readouterr().err
    assert not (tmp_path / "runs" / "comp-add" / "task" / "mlp").exists()
    assert {p.name: p.read_bytes() for p in good.iterdir()} == snapshot
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["failures"]) == 1 and man["failures"][0].startswith("comp-add/Task/MLP")


def test_failed_run_does_not_stop_others(tmp_path, capsys):
    blowup = write_cfg(tmp_path, train={**FAST["train"], "lr": 1e300, "max_steps": 5})
    code = main(["run", "--task", "comp-add", "--arch", "mlp,dlinear", "--config", blowup, "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert [r[2] for r in rows(capsys.readouterr().out)] == ["DLinear"]
    assert (tmp_path / "runs" / "comp-add" / "task" / "dlinear" / "records.csv").is_file()


def test_report_requires_runs(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "no completed runs" in capsys.readouterr().err


def test_report_after_run_skips_partial(tmp_path, capsys):
    main(["run", "--task", "comp-add", "--arch", "dlinear", "--config", write_cfg(tmp_path), "--out", str(tmp_path)])
    (tmp_path / "runs" / "comp-add" / "task" / "mlp").mkdir()
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path)]) == EXIT_OK
    md = capsys.readouterr().out.splitlines()
    assert md[0] == "| Model | Add. Task |" and md[2].startswith("| DLinear | ")
    assert len([line for line in md if line.startswith("| ")]) == 2
    csv_lines = (tmp_path / "reports" / "results.csv").read_text().splitlines()
    assert csv_lines[0] == "task,mode,arch,mean_mae,std_mae,n" and len(csv_lines) == 2


# usage errors


@pytest.mark.parametrize("argv", [
    ["run", "--task", "nope"],
    ["run", "--task", "comp-add", "--arch", "transformer"],
    ["run", "--task", "comp-add", "--mode", "train"],
    ["run", "--task", "comp-add", "--jobs", "0"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_config_key(tmp_path):
    cfg = write_cfg(tmp_path, train={"max_stepz": 3})
    assert main(["run", "--task", "comp-add", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_scale_name():
    with pytest.raises(SystemExit) as exc:
        main(["desk-suite", "huge"])
    assert exc.value.code == EXIT_USAGE


# planning and hashing


def test_desk_suite_tiny_plan():
    jobs = cli.desk_suite_jobs("tiny")
    sweep = [j for j in jobs if j.label.startswith("PatchTST")]
    assert len(jobs) == 6 * 2 * 3 + 5
    assert [j.model.patch_length for j in sweep] == list(PATCH_GRID)
    assert all(j.train.max_steps == 500 for j in jobs)
    assert {j.data_kw.get("grid_n") for j in jobs} == {10}
    comparison = next(j for j in jobs if j.task is TaskId.COMPARISON)
    assert (comparison.data_kw["n_id"], comparison.data_kw["n_ood"]) == (120, 24)


def test_config_hash_tracks_numerics():
    base = Job(TaskId.COMP_ADD, Mode.TASK, "MLP", {}, ModelConfig(Arch.MLP), TrainConfig())
    same = Job(TaskId.COMP_ADD, Mode.TASK, "MLP", {}, ModelConfig(Arch.MLP), TrainConfig())
    assert base.config_hash() == same.config_hash()
    for other in (
        Job(TaskId.COMP_ADD, Mode.TASK, "MLP", {}, ModelConfig(Arch.MLP, seed=1), TrainConfig()),
        Job(TaskId.COMP_ADD, Mode.TASK, "MLP", {}, ModelConfig(Arch.MLP), TrainConfig(lr=2e-3)),
        Job(TaskId.COMP_ADD, Mode.TASK, "MLP", {"grid_n": 3}, ModelConfig(Arch.MLP), TrainConfig()),
        Job(TaskId.COMP_ADD, Mode.BASELINE, "MLP", {}, ModelConfig(Arch.MLP), TrainConfig()),
    ):
        assert other.config_hash() != base.config_hash()


def test_plan_sweep_labels_and_dirs(tmp_path):
    jobs = plan_jobs([TaskId.COMP_ADD], [Arch.PATCHTST], [Mode.TASK], 0, "paper", True)
    dirs = [j.run_dir(tmp_path).name for j in jobs]
    assert len(set(dirs)) == 5


def test_training_cache_shares_identical_cells(tmp_path):
    cfg = write_cfg(tmp_path, data={"comp-add": {"grid_n": 2}, "comp-sub": {"grid_n": 2}})
    assert main(["run", "--task", "comp-add,comp-sub", "--arch", "dlinear", "--config", cfg,
                 "--out", str(tmp_path)]) == EXIT_OK
    # both tasks train on the same trend and seasonality series
    assert len(cli._TRAINED) == 1
    a, b = (load_checkpoint(tmp_path / "runs" / t / "task" / "dlinear" / "params.bin")[0]
            for t in ("comp-add", "comp-sub"))
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
