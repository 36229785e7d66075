"""Wall-clock and rejection-count benchmark of the generation strategies.

For every strategy and run, ``classes_per_run`` valid systems are generated
back to back and the total time and summed rejections recorded.  Class ``k``
of run ``r`` always draws from substream ``(r, k)`` of the root seed, so
rejection counts are reproducible and every strategy sees the same streams.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import filters
from .classifier import ForestConfig, ForestModel, load_model, train
from .corpus import QUICK_BAD, QUICK_GOOD, annotated_matrix
from .filters import AttemptsExhausted, FilterConfig, Strategy

DEFAULT_STRATEGIES = (Strategy.BASELINE_VARIANCE, Strategy.SVD_CONTROL, Strategy.RF_FILTER,
                      Strategy.TSF)
DEFAULT_CLASSES = 100
DEFAULT_RUNS = 10
_WARMUP_KEY = (2**32 - 1,)
COLUMNS = ("strategy", "mean_time_s", "mean_rejections", "std_time_s", "std_rejections",
           "runs", "failed_runs")


@dataclass
class RunResult:
    run: int
    classes: int
    time_s: float | None
    rejections: int | None
    reasons: dict = field(default_factory=dict)
    failure: str | None = None


@dataclass
class StrategyResult:
    strategy: str
    runs: list

    def _ok(self):
        return [r for r in self.runs if r.failure is None]

    @property
    def failed_runs(self) -> int:
        return len(self.runs) - len(self._ok())

    def _stat(self, attr, fn):
        vals = [getattr(r, attr) for r in self._ok()]
        return float(fn(vals)) if vals else float("nan")

    # population statistics over the successful runs
    mean_time_s = property(lambda self: self._stat("time_s", np.mean))
    std_time_s = property(lambda self: self._stat("time_s", np.std))
    mean_rejections = property(lambda self: self._stat("rejections", np.mean))
    std_rejections = property(lambda self: self._stat("rejections", np.std))

    def row(self) -> dict:
        return {"strategy": self.strategy, "mean_time_s": self.mean_time_s,
                "mean_rejections": self.mean_rejections, "std_time_s": self.std_time_s,
                "std_rejections": self.std_rejections, "runs": len(self.runs),
                "failed_runs": self.failed_runs}


@dataclass
class BenchReport:
    results: list
    machine: str
    config: dict
    parallel: bool = False

    @property
    def failed(self) -> bool:
        return any(r.failed_runs for r in self.results)

    def result(self, strategy) -> StrategyResult:
        key = Strategy.parse(strategy).value
        for r in self.results:
            if r.strategy == key:
                return r
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "machine": self.machine,
            "parallel": self.parallel,
            "comparable": not self.parallel,
            "config": self.config,
            "strategies": [{**r.row(), "per_run": [asdict(x) for x in r.runs]}
                           for r in self.results],
        }


def machine_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return f"{cpu}; {os.cpu_count()} logical cores; {platform.system()} {platform.release()}; " \
           f"Python {platform.python_version()}; numpy {np.__version__}"


def default_rf_model(seed: int = 0) -> ForestModel:
    """RF-Filter model trained on a synthetic annotated corpus (about 1 s)."""
    rng = np.random.default_rng(seed)
    m = annotated_matrix(rng, QUICK_GOOD, QUICK_BAD)
    return train(m, ForestConfig(), rng)


def _class_streams(entropy, run: int, count: int) -> list:
    return [np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(run, k)))
            for k in range(count)]


def _one_class(args):
    strategy, rng, config, model = args
    rec = filters.generate_valid(strategy, rng, config=config, model=model)
    return rec.rejections, rec.reasons


def _time_run(strategy, streams, config, model, jobs) -> RunResult:
    rejections, reasons = 0, {}
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_one_class, [(strategy, r, config, model) for r in streams]))
    else:
        out = [_one_class((strategy, r, config, model)) for r in streams]
    elapsed = time.perf_counter() - t0
    for rej, why in out:
        rejections += rej
        for k, v in why.items():
            reasons[k] = reasons.get(k, 0) + v
    return RunResult(0, len(streams), elapsed, rejections, dict(sorted(reasons.items())))


def run_benchmark(strategies=DEFAULT_STRATEGIES, classes_per_run: int = DEFAULT_CLASSES,
                  n_runs: int = DEFAULT_RUNS, rng_seed=None, config: FilterConfig | None = None,
                  model: ForestModel | None = None, warmup: bool = True, jobs: int = 1,
                  progress=None) -> BenchReport:
    """Time ``n_runs`` x ``classes_per_run`` generations per strategy.

    Strategies are measured one after another, never interleaved.  Timing
    covers sampling and filtering (and the chaos game where a strategy judges
    clouds); accepted systems are not rendered.  A strategy whose class hits
    the attempt limit records a failed run and moves on.
    """
    if classes_per_run < 1 or n_runs < 1:
        raise ValueError("classes_per_run and n_runs must be >= 1")
    strategies = [Strategy.parse(s) for s in strategies]
    config = config or FilterConfig()
    root = np.random.SeedSequence(rng_seed)
    snapshot = {"classes_per_run": classes_per_run, "n_runs": n_runs, "seed": root.entropy,
                "warmup": warmup, "jobs": jobs, "filter": config.to_dict()}

    if Strategy.RF_FILTER in strategies and model is None:
        if config.rf_model_path:
            model = load_model(config.rf_model_path)
        else:
            model = default_rf_model()
            snapshot["rf_model"] = (f"synthetic corpus, {QUICK_GOOD} good / {QUICK_BAD} bad, "
                                    "100 trees, seed 0")

    results = []
    for s in strategies:
        cfg = config.replace(strategy=s.value)
        if warmup:
            rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=_WARMUP_KEY))
            try:
                filters.generate_valid(s, rng, config=cfg, model=model)
            except AttemptsExhausted:
                pass
        runs = []
        for r in range(n_runs):
            streams = _class_streams(root.entropy, r, classes_per_run)
            try:
                res = _time_run(s, streams, cfg, model, jobs)
                res.run = r
            except AttemptsExhausted as exc:
                res = RunResult(r, classes_per_run, None, None, failure=str(exc))
            runs.append(res)
            if progress:
                progress(s.value, res)
        results.append(StrategyResult(s.value, runs))
    return BenchReport(results, machine_descriptor(), snapshot, parallel=jobs > 1)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if v != v else f"{v:.6g}"
    return str(v)


def emit_report(report: BenchReport, fmt: str = "markdown") -> str:
    """Render as ``csv``, ``markdown`` or ``json``; rows keep the strategy order."""
    fmt = fmt.lower()
    rows = [r.row() for r in report.results]
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()
    if fmt in ("markdown", "md"):
        lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
        lines += ["| " + " | ".join(_fmt(row[c]) for c in COLUMNS) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r} (csv, markdown, json)")
