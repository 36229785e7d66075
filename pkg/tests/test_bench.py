import csv
import io
import json
import math

import numpy as np
import pytest

from fractalforge.bench import (
    COLUMNS,
    BenchReport,
    RunResult,
    StrategyResult,
    emit_report,
    machine_descriptor,
    run_benchmark,
)
from fractalforge.filters import FilterConfig


def fixed_report():
    runs_a = [RunResult(0, 2, 1.0, 10), RunResult(1, 2, 3.0, 30)]
    runs_b = [RunResult(0, 2, 0.5, 0), RunResult(1, 2, None, None, failure="limit")]
    return BenchReport([StrategyResult("tsf", runs_a), StrategyResult("svd", runs_b)],
                       "test machine", {"seed": 1})


def test_population_statistics():
    r = fixed_report().results[0]
    assert r.mean_time_s == 2.0 and r.std_time_s == 1.0
    assert r.mean_rejections == 20.0 and r.std_rejections == 10.0


def test_failed_runs_are_excluded_from_statistics():
    rep = fixed_report()
    svd = rep.result("svd")
    assert svd.failed_runs == 1 and svd.mean_time_s == 0.5
    assert rep.failed
    assert math.isnan(StrategyResult("x", [RunResult(0, 1, None, None, failure="f")]).mean_time_s)


def test_csv_snapshot():
    expected = (
        "strategy,mean_time_s,mean_rejections,std_time_s,std_rejections,runs,failed_runs\n"
        "tsf,2,20,1,10,2,0\n"
        "svd,0.5,0,0,0,2,1\n"
    )
    assert emit_report(fixed_report(), "csv") == expected


def test_markdown_snapshot():
    lines = emit_report(fixed_report(), "markdown").splitlines()
    assert lines[0] == "| " + " | ".join(COLUMNS) + " |"
    assert lines[2] == "| tsf | 2 | 20 | 1 | 10 | 2 | 0 |"
    assert len(lines) == 4


def test_json_report():
    d = json.loads(emit_report(fixed_report(), "json"))
    assert d["machine"] == "test machine" and d["comparable"] is True
    assert [s["strategy"] for s in d["strategies"]] == ["tsf", "svd"]
    assert d["strategies"][1]["per_run"][1]["failure"] == "limit"


def test_empty_report_has_header_only():
    rep = BenchReport([], "m", {})
    assert emit_report(rep, "csv") == ",".join(COLUMNS) + "\n"
    assert len(emit_report(rep, "md").splitlines()) == 2
    with pytest.raises(ValueError):
        emit_report(rep, "xml")


def test_single_run_structure():
    rep = run_benchmark(["svd"], classes_per_run=1, n_runs=1, rng_seed=0)
    rows = list(csv.DictReader(io.StringIO(emit_report(rep, "csv"))))
    assert len(rows) == 1 and rows[0]["strategy"] == "svd"
    assert float(rows[0]["mean_rejections"]) == 0.0
    assert float(rows[0]["mean_time_s"]) >= 0.0


def test_rejections_are_reproducible():
    a = run_benchmark(["tsf"], classes_per_run=5, n_runs=2, rng_seed=42, warmup=False)
    b = run_benchmark(["tsf"], classes_per_run=5, n_runs=2, rng_seed=42)
    assert [r.rejections for r in a.results[0].runs] == [r.rejections for r in b.results[0].runs]
    assert a.config["seed"] == 42


def test_exhaustion_marks_the_run_failed():
    rep = run_benchmark(["baseline"], classes_per_run=2, n_runs=2, rng_seed=1,
                        config=FilterConfig(variance_threshold=0.99, max_attempts=2))
    assert rep.failed and rep.result("baseline").failed_runs == 2
    assert "nan" in emit_report(rep, "csv")


def test_argument_checks():
    with pytest.raises(ValueError):
        run_benchmark(["svd"], classes_per_run=0)
    with pytest.raises(ValueError):
        run_benchmark(["warp-drive"], classes_per_run=1, n_runs=1)


def test_machine_descriptor():
    d = machine_descriptor()
    assert "numpy" in d and "Python" in d
    assert np.__version__ in d
