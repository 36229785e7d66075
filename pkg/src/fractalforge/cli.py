"""``fractalforge`` command line.

Settings are merged as flags > config file (``--config``, JSON) > defaults.
The seed falls back to the FRACTALFORGE_SEED environment variable.  Exit
codes: 0 success, 1 configuration or input error, 2 generation failure
(attempt limit reached, divergent class, bench run failed).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, classifier, dataset, features, filters, render, video
from .chaos import chaos_game, normalize_cloud
from .ifs import IfsSystem, substreams

SEED_ENV = "FRACTALFORGE_SEED"
CONFIG_SECTIONS = ("seed", "jobs", "filter", "motion", "camera", "dataset", "bench")

log = logging.getLogger("fractalforge")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors: exit 1, keeping 2 for generation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# config plumbing


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
    return data


def resolve_seed(args, cfg: dict):
    if args.seed is not None:
        return args.seed
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return None


def _jobs(args, cfg: dict, default: int = 1) -> int:
    jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", default))
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return jobs


_FILTER_FLAGS = {
    "epsilon": "epsilon", "variance_threshold": "variance_threshold",
    "eigen_threshold": "eigen_threshold", "stat_lower": "stat_lower",
    "stat_upper": "stat_upper", "rf_model": "rf_model_path",
    "proba_threshold": "proba_threshold", "max_attempts": "max_attempts",
    "points": "points", "burn_in": "burn_in", "rotation": "rotation_mode",
    "tsf_resample": "tsf_resample",
}


def filter_overrides(args, cfg: dict) -> dict:
    d = dict(cfg.get("filter", {}))
    for flag, key in _FILTER_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "raw_variance", False):
        d["normalize_cloud"] = False
    return d


def build_filter_config(args, cfg: dict, strategy=None) -> filters.FilterConfig:
    d = filter_overrides(args, cfg)
    if strategy is not None:
        d["strategy"] = strategy
    try:
        return filters.FilterConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid filter configuration: {exc}") from exc


def _rf_model(config: filters.FilterConfig):
    if config.strategy is not filters.Strategy.RF_FILTER:
        return None
    if config.rf_model_path:
        return classifier.load_model(config.rf_model_path)
    log.info("no --rf-model given; training the default synthetic-corpus model")
    return bench.default_rf_model()


# --------------------------------------------------------------------------
# commands


def cmd_sample(args, cfg) -> int:
    config = build_filter_config(args, cfg, args.strategy or cfg.get("filter", {}).get("strategy", "tsf"))
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    seed = resolve_seed(args, cfg)
    model = _rf_model(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ss = np.random.SeedSequence(seed)
    total = 0
    for i, rng in enumerate(substreams(ss, args.count)):
        rec = filters.generate_valid(config.strategy, rng, config=config, model=model)
        rec.system.seed = [ss.entropy, i]
        name = f"system_{i:04d}.json"
        (out / name).write_text(rec.system.to_json(indent=1) + "\n")
        total += rec.rejections
        print(f"{name}\tn={rec.system.n}\trejections={rec.rejections}")
    print(f"total rejections: {total}")
    return 0


def _dataset_spec(args, cfg, seed) -> dataset.DatasetSpec:
    d = dict(cfg.get("dataset", {}))
    for flag, key in (("classes", "classes"), ("instances", "instances"),
                      ("val_per_class", "val_per_class"), ("strategy", "strategy"),
                      ("points", "points"), ("burn_in", "burn_in"), ("jitter", "jitter"),
                      ("splat_radius", "splat_radius"), ("encoder", "encoder")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    d["seed"] = seed
    filt = filter_overrides(args, cfg)
    filt.pop("points", None)
    filt.pop("burn_in", None)
    if args.strategy is not None:
        filt["strategy"] = args.strategy
    d["filter"] = filt
    d.setdefault("motion", cfg.get("motion", {}))
    d.setdefault("camera", cfg.get("camera", {}))
    try:
        return dataset.DatasetSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid dataset configuration: {exc}") from exc


def cmd_dataset(args, cfg) -> int:
    jobs = _jobs(args, cfg)
    out = Path(args.out)
    if args.from_manifest:
        dataset.regenerate(args.from_manifest, out, jobs)
        print(f"regenerated {out} from {args.from_manifest}")
        return 0
    spec = _dataset_spec(args, cfg, resolve_seed(args, cfg))
    config = spec.filter_config()
    model = _rf_model(config)

    def progress(c, rec):
        print(f"class {c:04d}: n={rec.system.n} rejections={rec.rejections}", flush=True)

    manifest = dataset.write_dataset(spec, out, model, jobs, progress)
    n_inst = sum(len(c["instances"]) for c in manifest["classes"])
    print(f"wrote {n_inst} instances of {spec.classes} classes to {out}")
    return 0


def cmd_bench(args, cfg) -> int:
    bcfg = dict(cfg.get("bench", {}))
    names = args.strategies or bcfg.get("strategies", "all")
    if isinstance(names, str):
        names = [s for s in names.split(",") if s.strip()]
    if names == ["all"]:
        strategies = list(bench.DEFAULT_STRATEGIES)
    else:
        try:
            strategies = [filters.Strategy.parse(s) for s in names]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    classes = args.classes if args.classes is not None else int(bcfg.get("classes", bench.DEFAULT_CLASSES))
    runs = args.runs if args.runs is not None else int(bcfg.get("runs", bench.DEFAULT_RUNS))
    if classes < 1 or runs < 1:
        raise ConfigError("--classes and --runs must be >= 1")
    config = build_filter_config(args, cfg)
    jobs = _jobs(args, cfg)

    def progress(s, res):
        state = res.failure or f"{res.time_s:.4f}s rejections={res.rejections}"
        print(f"{s} run {res.run}: {state}", file=sys.stderr, flush=True)

    report = bench.run_benchmark(strategies, classes, runs, resolve_seed(args, cfg), config,
                                 warmup=not args.no_warmup, jobs=jobs, progress=progress)
    if args.out:
        out = Path(args.out)
        fmt = args.format or {".csv": "csv", ".json": "json"}.get(out.suffix.lower(), "markdown")
        out.write_text(bench.emit_report(report, fmt))
    print(bench.emit_report(report, "markdown"), end="")
    print(f"machine: {report.machine}")
    if report.parallel:
        print("note: parallel run; times are not comparable to serial measurements")
    return 2 if report.failed else 0


def _read_system(path) -> IfsSystem:
    path = Path(path)
    try:
        return IfsSystem.from_json(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a valid IFS record: {exc}") from exc


def cmd_features(args, cfg) -> int:
    systems = [_read_system(p) for p in args.systems]
    labels = None if args.label is None else [features.parse_label(args.label)] * len(systems)
    m = features.extract_matrix(systems, labels)
    if args.out:
        features.write_csv(m, args.out)
    else:
        features.format_csv(m, sys.stdout)
    return 0


def cmd_train_rf(args, cfg) -> int:
    try:
        m = features.read_csv(args.csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    if m.labels is None:
        raise ConfigError(f"{args.csv}: a label column is required for training")
    if args.columns:
        m = m.select([c.strip() for c in args.columns.split(",")])
    if not 0.0 <= args.holdout < 1.0:
        raise ConfigError("--holdout must be in [0, 1)")
    seed = resolve_seed(args, cfg)
    rng = np.random.default_rng(seed)
    config = classifier.ForestConfig(n_trees=args.trees, max_depth=args.max_depth,
                                     min_samples_leaf=args.min_samples_leaf)
    idx = rng.permutation(len(m))
    n_test = int(round(args.holdout * len(m)))
    test, fit = idx[:n_test], idx[n_test:]
    sub = lambda rows: features.FeatureMatrix(m.columns, m.x[rows], m.labels[rows])  # noqa: E731
    model = classifier.train(sub(fit), config, rng)
    classifier.save_model(model, args.out)
    print(f"trained {config.n_trees} trees on {len(fit)} rows -> {args.out}")
    if n_test:
        t = sub(test)
        pred = (classifier.predict_proba_many(model, t) > 0.5).astype(int)
        print(f"held-out accuracy: {np.mean(pred == t.labels):.4f}")
        if len(np.unique(t.labels)) == 2:
            print(f"held-out balanced accuracy: {classifier.balanced_accuracy(t.labels, pred):.4f}")
    if args.importance_runs:
        target = sub(test) if n_test and len(np.unique(m.labels[test])) == 2 else sub(fit)
        rep = classifier.permutation_importance(model, target, args.importance_runs, rng)
        print("permutation importance (balanced accuracy drop):")
        for c, mu, sd in zip(rep.columns, rep.mean, rep.std):
            print(f"  {c:24s} {mu: .5f} +- {sd:.5f}")
        corr = features.correlation_matrix(m)
        picked = features.correlation_prune(rep.columns, corr, m.columns, args.max_corr, args.top_k)
        print("selected after correlation pruning: " + ", ".join(picked))
    return 0


def cmd_render_preview(args, cfg) -> int:
    system = _read_system(args.system)
    seed = resolve_seed(args, cfg)
    rng = np.random.default_rng(seed)
    try:
        ranges = video.MotionRanges.from_dict(cfg.get("motion", {}))
        cam = render.Camera.from_dict(cfg.get("camera", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not video.MIN_FRAMES <= args.frames <= video.MAX_FRAMES:
        raise ConfigError(f"--frames must be in [{video.MIN_FRAMES}, {video.MAX_FRAMES}]")
    cloud = normalize_cloud(chaos_game(system, args.points, rng=rng))
    profile = video.MotionProfile() if args.static else video.sample_motion_profile(rng, ranges)
    seq = video.render_sequence_clouds(profile, cloud, args.frames)
    frames = render.render_frames(seq.frames, cam, args.splat_radius)
    sheet = render.contact_sheet(frames, args.cols)
    render.write_frame_png(sheet, args.out)
    black = sum(f.is_black() for f in frames)
    print(f"wrote {args.out} ({len(frames)} frames, {black} black)")
    return 0


# --------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--seed", type=int, help=f"root seed (falls back to ${SEED_ENV})")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress details")


def _add_filter_flags(p):
    g = p.add_argument_group("filter settings")
    g.add_argument("--epsilon", type=float, help="TSF minimum singular value, in (0, 1); default 0.2")
    g.add_argument("--variance-threshold", type=float, help="axis variance threshold; default 0.05")
    g.add_argument("--raw-variance", action="store_true",
                   help="judge variance on the raw cloud instead of the normalised one")
    g.add_argument("--eigen-threshold", type=float, help="PCA eigenvalue threshold; default 0.05")
    g.add_argument("--stat-lower", type=float, help="mean |det| lower bound; default 0.0276")
    g.add_argument("--stat-upper", type=float, help="mean |det| upper bound; default 0.26")
    g.add_argument("--rf-model", help="RF model JSON for the rf strategy")
    g.add_argument("--proba-threshold", type=float, help="RF acceptance threshold; default 0.5")
    g.add_argument("--max-attempts", type=int, help="rejections before giving up; default 1e6")
    g.add_argument("--rotation", choices=["euler", "quaternion"], help="SVD rotation sampler")
    g.add_argument("--tsf-resample", choices=["map", "system"],
                   help="TSF redraws only the failing matrix (map) or the whole IFS (system)")


_STRATEGY_HELP = "baseline, svd, stat, pca_naive, pca_svd, rf or tsf"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fractalforge", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample and filter IFS parameter sets")
    _add_common(p)
    _add_filter_flags(p)
    p.add_argument("--strategy", help=_STRATEGY_HELP + " (default tsf)")
    p.add_argument("--count", type=int, default=10, help="systems to write (default 10)")
    p.add_argument("--out", default="systems", help="output directory (default ./systems)")
    p.add_argument("--points", type=int, help="chaos game points for cloud-based filters")
    p.add_argument("--burn-in", type=int, help="discarded chaos game iterations")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("dataset", help="generate a fractal video dataset")
    _add_common(p)
    _add_filter_flags(p)
    p.add_argument("--out", default="dataset", help="output directory (default ./dataset)")
    p.add_argument("--classes", type=int, help="number of classes")
    p.add_argument("--instances", type=int, help="training instances per class")
    p.add_argument("--val-per-class", type=int, help="validation instances per class (default 10%%)")
    p.add_argument("--strategy", help=_STRATEGY_HELP + " (default tsf)")
    p.add_argument("--points", type=int, help="points per cloud (default 10000)")
    p.add_argument("--burn-in", type=int, help="discarded chaos game iterations (default 100)")
    p.add_argument("--jitter", type=float, help="per-instance motion jitter fraction (default 0.1)")
    p.add_argument("--splat-radius", type=int, help="point disc radius in pixels (default 1)")
    p.add_argument("--encoder", help='video encoder template, e.g. "ffmpeg -y -r 12 -i {frames} {out}"')
    p.add_argument("--from-manifest", help="re-render the dataset described by this manifest")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("bench", help="time strategies over repeated runs")
    _add_common(p)
    _add_filter_flags(p)
    p.add_argument("--strategies", help="comma-separated list or 'all' (default all)")
    p.add_argument("--classes", type=int, help="valid classes per run (default 100)")
    p.add_argument("--runs", type=int, help="runs per strategy (default 10)")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--format", choices=["csv", "markdown", "json"],
                   help="report file format (default from the --out extension)")
    p.add_argument("--no-warmup", action="store_true", help="skip the untimed warm-up class")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("features", help="feature CSV from IFS JSON files")
    _add_common(p)
    p.add_argument("systems", nargs="+", help="IFS JSON files")
    p.add_argument("--label", choices=["good", "bad"], help="label every row")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-rf", help="train the RF filter from a labelled feature CSV")
    _add_common(p)
    p.add_argument("csv", help="labelled feature CSV")
    p.add_argument("--out", default="rf_model.json", help="model path (default rf_model.json)")
    p.add_argument("--columns", help="comma-separated feature subset")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction (default 0.2)")
    p.add_argument("--importance-runs", type=int, default=0,
                   help="permutation importance shuffles per feature (0 = skip)")
    p.add_argument("--max-corr", type=float, default=0.8, help="pruning correlation cap")
    p.add_argument("--top-k", type=int, default=5, help="features kept after pruning")
    p.set_defaults(func=cmd_train_rf)

    p = sub.add_parser("render-preview", help="contact sheet of one system's video")
    _add_common(p)
    p.add_argument("system", help="IFS JSON file")
    p.add_argument("--out", default="preview.png")
    p.add_argument("--frames", type=int, default=18)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--splat-radius", type=int, default=render.DEFAULT_SPLAT_RADIUS)
    p.add_argument("--static", action="store_true", help="no motion, same view every frame")
    p.set_defaults(func=cmd_render_preview)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except filters.AttemptsExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except dataset.GenerationFailed as exc:
        print(f"error: generation failed: {exc}", file=sys.stderr)
        return 2
    except (classifier.SchemaMismatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
