"""On-disk fractal video datasets: PNG frame folders plus a regenerable manifest.

Writing happens in two passes.  ``build_manifest`` samples every class
(filtered IFS, motion profile) and every instance (seed, frame count, jittered
profile); ``render_manifest`` turns a manifest into frames.  ``regenerate``
is the second pass alone, so a manifest reproduces its dataset byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import shutil
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import chaos, filters, render, video
from .classifier import ForestModel
from .ifs import IfsSystem

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "fractalforge.dataset"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
DEFAULT_VAL_FRACTION = 0.1
_META_STREAM = 0
_CLOUD_STREAM = 1


class GenerationFailed(RuntimeError):
    pass


@dataclass
class DatasetSpec:
    classes: int = 1
    instances: int = 1  # training instances per class
    val_per_class: int | None = None  # default: 10% of instances, rounded
    strategy: str = "tsf"
    seed: int | None = None
    points: int = chaos.DEFAULT_POINTS
    burn_in: int = chaos.DEFAULT_BURN_IN
    jitter: float = video.DEFAULT_JITTER
    splat_radius: int = render.DEFAULT_SPLAT_RADIUS
    filter: dict = field(default_factory=dict)  # FilterConfig overrides
    motion: dict = field(default_factory=dict)  # MotionRanges overrides
    camera: dict = field(default_factory=dict)  # Camera overrides
    encoder: str | None = None  # e.g. "ffmpeg -y -r 12 -i {frames} {out}"

    def __post_init__(self):
        if self.classes < 1 or self.instances < 1:
            raise ValueError("classes and instances must be >= 1")
        if self.val_per_class is None:
            self.val_per_class = int(round(DEFAULT_VAL_FRACTION * self.instances))
        if self.val_per_class < 0:
            raise ValueError("val_per_class must be >= 0")
        if self.points < 2 or self.burn_in < 0:
            raise ValueError("points must be >= 2 and burn_in >= 0")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must be in [0, 1)")
        if self.splat_radius < 0:
            raise ValueError("splat_radius must be >= 0")
        # validate the nested sections eagerly
        self.filter_config()
        self.motion_ranges()
        self.camera_config()

    def filter_config(self) -> filters.FilterConfig:
        d = dict(self.filter)
        d.setdefault("strategy", self.strategy)
        return filters.FilterConfig.from_dict(d)

    def motion_ranges(self) -> video.MotionRanges:
        return video.MotionRanges.from_dict(self.motion)

    def camera_config(self) -> render.Camera:
        return render.Camera.from_dict(self.camera)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown dataset keys: {sorted(unknown)}")
        return cls(**d)


def _seed_sequence(entropy, key) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy, spawn_key=tuple(key))


def instance_dir(split: str, c: int, i: int) -> str:
    return f"{split}/class_{c:04d}/inst_{i:04d}"


def build_manifest(spec: DatasetSpec, model: ForestModel | None = None, progress=None) -> dict:
    """Sample every class and instance; no frames are produced here.

    Class ``c`` draws from substream ``(c,)`` of the root seed and instance
    ``j`` of that class from ``(c, j, 0)`` (frame count, jitter) and
    ``(c, j, 1)`` (chaos game); validation instances continue the instance
    numbering after the training ones.
    """
    root = np.random.SeedSequence(spec.seed)
    config = spec.filter_config()
    ranges = spec.motion_ranges()
    classes = []
    for c in range(spec.classes):
        rng = np.random.default_rng(_seed_sequence(root.entropy, (c,)))
        try:
            rec = filters.generate_valid(config.strategy, rng, config=config, model=model)
        except filters.AttemptsExhausted as exc:
            raise GenerationFailed(f"class {c}: {exc}") from exc
        profile = video.sample_motion_profile(rng, ranges)
        instances = []
        splits = [("train", spec.instances), ("val", spec.val_per_class)]
        j = 0
        for split, count in splits:
            for i in range(count):
                irng = np.random.default_rng(_seed_sequence(root.entropy, (c, j, _META_STREAM)))
                t_count = video.sample_t_count(irng)
                inst_profile = video.jitter_profile(profile, irng, spec.jitter)
                instances.append({
                    "split": split, "index": i, "dir": instance_dir(split, c, i),
                    "spawn_key": [c, j], "t_count": t_count,
                    "profile": inst_profile.to_dict(),
                })
                j += 1
        classes.append({
            "class": c, "system": rec.system.to_dict(), "profile": profile.to_dict(),
            "rejections": rec.rejections, "reasons": dict(sorted(rec.reasons.items())),
            "instances": instances,
        })
        if progress:
            progress(c, rec)
    return {
        "format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
        "entropy": root.entropy, "spec": spec.to_dict(), "classes": classes,
    }


def _render_instance(task) -> dict:
    out_dir, entropy, system_d, inst, spec_d = task
    spec = DatasetSpec.from_dict(spec_d)
    system = IfsSystem.from_dict(system_d)
    rng = np.random.default_rng(_seed_sequence(entropy, [*inst["spawn_key"], _CLOUD_STREAM]))
    try:
        cloud = chaos.chaos_game(system, spec.points, spec.burn_in, rng)
    except chaos.DivergenceError as exc:
        raise GenerationFailed(f"{inst['dir']}: {exc}") from exc
    cloud = chaos.normalize_cloud(cloud)
    profile = video.MotionProfile.from_dict(inst["profile"])
    seq = video.render_sequence_clouds(profile, cloud, inst["t_count"])
    frames = render.render_frames(seq.frames, spec.camera_config(), spec.splat_radius)

    final = Path(out_dir) / inst["dir"]
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = final.parent / f".tmp_{final.name}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    for k, f in enumerate(frames):
        render.write_frame_png(f, tmp / f"frame_{k:02d}.png")
    if spec.encoder:
        _encode(spec.encoder, tmp)
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)
    return {"dir": inst["dir"], "black_frames": sum(f.is_black() for f in frames)}


def _encode(template: str, folder: Path) -> None:
    cmd = template.format(frames=shlex.quote(str(folder / "frame_%02d.png")),
                          out=shlex.quote(str(folder / "video.mp4")))
    result = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if result.returncode != 0:
        raise GenerationFailed(f"encoder failed in {folder}: {result.stderr.strip()}")


def render_manifest(manifest: dict, out_dir, jobs: int = 1, progress=None) -> dict:
    """Write every instance of ``manifest`` under ``out_dir``; returns black-frame counts."""
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError("not a dataset manifest")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')}")
    tasks = [(str(out_dir), manifest["entropy"], cls["system"], inst, manifest["spec"])
             for cls in manifest["classes"] for inst in cls["instances"]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_render_instance, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_render_instance(t))
            if progress:
                progress(t[3]["dir"])
    black = {r["dir"]: r["black_frames"] for r in results if r["black_frames"]}
    for d, n in black.items():
        log.warning("%s: %d frame(s) with nothing visible", d, n)
    return black


def write_manifest(manifest: dict, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def load_manifest(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid manifest JSON: {exc}") from exc


def write_dataset(spec: DatasetSpec, out_dir, model: ForestModel | None = None,
                  jobs: int = 1, progress=None) -> dict:
    """Sample, render and write a dataset; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(spec, model, progress)
    black = render_manifest(manifest, out_dir, jobs)
    for cls in manifest["classes"]:
        for inst in cls["instances"]:
            inst["black_frames"] = black.get(inst["dir"], 0)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def regenerate(manifest_path, out_dir, jobs: int = 1) -> dict:
    """Re-render a dataset from its manifest alone."""
    manifest = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    render_manifest(manifest, out_dir, jobs)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest
