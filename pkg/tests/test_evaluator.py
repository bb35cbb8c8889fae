import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsir.errors import InvalidArgument
from tsir.evaluator import (
    Cell,
    EvalRecord,
    ResultTable,
    aggregate,
    arch_sort_key,
    evaluate_ood,
    forecast_ood,
    mae,
    ood_context,
    read_records,
    read_results_csv,
    render_markdown,
    render_report,
    score_forecasts,
    write_records,
    write_results_csv,
)
from tsir.models import Arch, ModelConfig, init_params
from tsir.seriesgen import eval_function, generate_series
from tsir.tasks import Mode, TaskId, build_comp_add

# MAE


def test_mae_examples():
    assert mae([1, 1], [0, 2]) == 1.0
    assert mae([3, 0, -3], [1, 2, -1]) == 2.0
    assert mae(np.arange(5.0), np.arange(5.0)) == 0.0


def test_mae_errors():
    with pytest.raises(InvalidArgument):
        mae([1, 2, 3], [1, 2])
    with pytest.raises(InvalidArgument):
        mae([], [])


@given(st.integers(0, 2**31 - 1), st.floats(-1e3, 1e3, allow_nan=False))
@settings(max_examples=60)
def test_mae_scale_law(seed, c):
    rng = np.random.default_rng(seed)
    y, yhat = rng.normal(size=(2, 200))
    assert math.isclose(mae(c * y, c * yhat), abs(c) * mae(y, yhat), rel_tol=1e-12, abs_tol=1e-300)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30)
def test_mae_symmetric_and_nonnegative(seed):
    y, yhat = np.random.default_rng(seed).normal(size=(2, 50))
    assert mae(y, yhat) == mae(yhat, y) >= 0


# forecasting


def trained(arch=Arch.DLINEAR):
    m = init_params(ModelConfig(arch))
    m.trained = True
    return m


def test_ood_context_geometry():
    s = generate_series(build_comp_add(1).ood_series[0].spec)
    assert np.array_equal(ood_context(s), s.values[800:1000])


def test_forecast_uses_context_window():
    m = trained()
    ds = build_comp_add(2)
    s = ds.ood_series[0]
    for name in ("trend.weight", "seasonal.weight"):
        m.params[name].data = np.zeros((200, 200))
    # identity on the last context sample: forecast is flat at x[999]
    m.params["trend.weight"].data[199, :] = 1.0
    m.params["seasonal.weight"].data[199, :] = 1.0
    out = forecast_ood(m, s)
    assert out.shape == (200,)
    assert np.allclose(out, s.values[999], rtol=1e-12)


def test_forecast_batch_matches_single():
    m = trained()
    ood = build_comp_add(2).ood_series
    batch = forecast_ood(m, ood)
    for i, s in enumerate(ood):
        assert np.allclose(batch[i], forecast_ood(m, s), rtol=0, atol=1e-12)


def test_forecast_refuses_untrained():
    with pytest.raises(InvalidArgument):
        forecast_ood(init_params(ModelConfig(Arch.MLP)), build_comp_add(1).ood_series[0])


def test_oracle_forecasts_score_zero():
    ood = build_comp_add(3).ood_series
    x = np.arange(1200) / 1199
    perfect = [eval_function(s.spec, x)[1000:] for s in ood]
    recs = score_forecasts(TaskId.COMP_ADD, Mode.TASK, "Oracle", ood, perfect)
    assert [r.series_index for r in recs] == list(range(len(ood)))
    assert all(r.mae == 0.0 for r in recs)
    with pytest.raises(InvalidArgument):
        score_forecasts(TaskId.COMP_ADD, Mode.TASK, "Oracle", ood, perfect[:-1])


def test_evaluate_ood_chunks_keep_indices():
    m = trained()
    ood = build_comp_add(3).ood_series
    whole = evaluate_ood(m, TaskId.COMP_ADD, Mode.TASK, "DLinear", ood)
    pieces = evaluate_ood(m, TaskId.COMP_ADD, Mode.TASK, "DLinear", ood, chunk=4)
    assert [r.series_index for r in pieces] == list(range(9))
    for a, b in zip(whole, pieces):
        assert math.isclose(a.mae, b.mae, rel_tol=1e-12)


# aggregation


def rec(v, i=0, arch="MLP", task=TaskId.COMP_ADD, mode=Mode.TASK):
    return EvalRecord(task, mode, arch, i, v)


def test_aggregate_population_std():
    table = aggregate([rec(0.0, 0), rec(2.0, 1)])
    c = table.get(TaskId.COMP_ADD, Mode.TASK, "MLP")
    assert (c.mean_mae, c.std_mae, c.n) == (1.0, 1.0, 2)


def test_aggregate_single_record():
    c = aggregate([rec(0.7)]).cells[0]
    assert (c.mean_mae, c.std_mae, c.n) == (0.7, 0.0, 1)


def test_aggregate_empty_and_missing():
    assert aggregate([]).cells == []
    assert aggregate([rec(1.0)]).get(TaskId.COMP_SUB, Mode.TASK, "MLP") is None


def test_aggregate_order():
    recs = [
        rec(1.0, arch="PatchTST[p=100]"), rec(1.0, arch="NHITS", mode=Mode.BASELINE),
        rec(1.0, arch="PatchTST[p=1]"), rec(1.0, arch="MLP", task=TaskId.INVERSE_SEARCH),
        rec(1.0, arch="DLinear"),
    ]
    got = [(c.task, c.mode, c.arch) for c in aggregate(recs).cells]
    assert got == [
        (TaskId.COMP_ADD, Mode.TASK, "DLinear"),
        (TaskId.COMP_ADD, Mode.TASK, "PatchTST[p=1]"),
        (TaskId.COMP_ADD, Mode.TASK, "PatchTST[p=100]"),
        (TaskId.COMP_ADD, Mode.BASELINE, "NHITS"),
        (TaskId.INVERSE_SEARCH, Mode.TASK, "MLP"),
    ]
    assert sorted(["PatchTST", "MLP", "PatchTST[p=50]"], key=arch_sort_key) == ["MLP", "PatchTST", "PatchTST[p=50]"]


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_aggregate_mean_within_range(vals):
    c = aggregate([rec(v, i) for i, v in enumerate(vals)]).cells[0]
    assert min(vals) <= c.mean_mae <= max(vals)
    assert c.std_mae >= 0 and c.n == len(vals)


def test_aggregate_huge_values_stay_finite():
    c = aggregate([rec(1e300, 0), rec(3e300, 1)]).cells[0]
    assert math.isclose(c.mean_mae, 2e300) and math.isclose(c.std_mae, 1e300)


def test_records_reject_bad_mae():
    with pytest.raises(InvalidArgument):
        rec(-1.0)
    with pytest.raises(InvalidArgument):
        rec(float("nan"))


def test_table_consistent_with_records_csv(tmp_path):
    rng = np.random.default_rng(5)
    recs = [rec(float(v), i) for i, v in enumerate(rng.random(37))]
    write_records(recs, tmp_path / "r.csv")
    back = read_records(tmp_path / "r.csv")
    assert back == recs
    c = aggregate(back).cells[0]
    assert abs(c.mean_mae - float(np.mean([r.mae for r in recs]))) <= 1e-12
    assert abs(c.std_mae - float(np.std([r.mae for r in recs]))) <= 1e-12


# rendering


def test_empty_table_renders_headers_only():
    md = render_markdown(ResultTable([]))
    assert md.splitlines() == ["| Model |  |", "|---|"]


def test_markdown_bolds_column_minimum():
    table = aggregate([rec(0.5, arch="MLP"), rec(0.25, arch="DLinear"),
                       rec(0.75, arch="MLP", mode=Mode.BASELINE)])
    lines = render_markdown(table).splitlines()
    assert lines[0] == "| Model | Add. Task | Add. Base. |"
    assert lines[2] == "| MLP | 0.500 (0.000) | **0.750 (0.000)** |"
    assert lines[3] == "| DLinear | **0.250 (0.000)** | - |"
    assert "reported reference mean 0.689" in render_markdown(table)


def test_results_csv_round_trip(tmp_path):
    table = aggregate([rec(0.1 + i / 3, i, arch=a) for i in range(4) for a in ("MLP", "NHITS")])
    write_results_csv(table, tmp_path / "results.csv")
    text = (tmp_path / "results.csv").read_text()
    assert text.splitlines()[0] == "task,mode,arch,mean_mae,std_mae,n"
    assert read_results_csv(tmp_path / "results.csv") == table


def test_render_report_is_deterministic(tmp_path):
    table = aggregate([rec(0.3, 0), rec(0.4, 1, arch="NHITS")])
    a = render_report(table, tmp_path / "a")
    b = render_report(table, tmp_path / "b", figures=False)
    assert [p.name for p in a] == ["results.csv", "results.md", "mae_by_task.png"]
    assert (tmp_path / "a" / "mae_by_task.png").stat().st_size > 0
    for name in ("results.csv", "results.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert all(isinstance(c, Cell) for c in read_results_csv(tmp_path / "a" / "results.csv").cells)
