import filecmp
import json

import numpy as np
import pytest

from fractalforge.dataset import (
    MANIFEST_NAME,
    DatasetSpec,
    GenerationFailed,
    build_manifest,
    instance_dir,
    load_manifest,
    regenerate,
    render_manifest,
    write_dataset,
)
from fractalforge.ifs import IfsSystem
from fractalforge.render import read_frame_png


def small_spec(**kw):
    base = dict(classes=2, instances=3, val_per_class=1, seed=11, points=1500)
    base.update(kw)
    return DatasetSpec(**base)


def tree_files(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def same_tree(a, b):
    files = tree_files(a)
    if files != tree_files(b):
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    return not mismatch and not errors


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    manifest = write_dataset(small_spec(), out)
    return out, manifest


def test_layout(built):
    out, manifest = built
    dirs = sorted({p.parent.relative_to(out).as_posix() for p in out.rglob("frame_*.png")})
    assert len(dirs) == 8
    assert sum(d.startswith("train/") for d in dirs) == 6
    assert sum(d.startswith("val/") for d in dirs) == 2
    assert instance_dir("val", 1, 0) in dirs
    for cls in manifest["classes"]:
        for inst in cls["instances"]:
            frames = sorted((out / inst["dir"]).glob("frame_*.png"))
            assert len(frames) == inst["t_count"] and 18 <= inst["t_count"] <= 20
    frame = read_frame_png(next(out.rglob("frame_00.png")))
    assert frame.pixels.shape == (256, 256, 3)
    assert not list(out.rglob(".tmp_*"))


def test_manifest_contents(built):
    out, manifest = built
    on_disk = json.loads((out / MANIFEST_NAME).read_text())
    assert on_disk == manifest
    assert manifest["spec"]["seed"] == 11
    for cls in manifest["classes"]:
        system = IfsSystem.from_dict(cls["system"])
        assert 2 <= system.n <= 8
        keys = [tuple(i["spawn_key"]) for i in cls["instances"]]
        assert len(set(keys)) == len(keys)


def test_instances_differ_within_a_class(built):
    out, manifest = built
    inst = manifest["classes"][0]["instances"]
    a = read_frame_png(out / inst[0]["dir"] / "frame_05.png").pixels
    b = read_frame_png(out / inst[1]["dir"] / "frame_05.png").pixels
    assert not np.array_equal(a, b)


def test_regeneration_is_byte_identical(built, tmp_path):
    out, _ = built
    regenerate(out / MANIFEST_NAME, tmp_path)
    assert same_tree(out, tmp_path)


def test_same_seed_same_tree(built, tmp_path):
    out, _ = built
    write_dataset(small_spec(), tmp_path)
    assert same_tree(out, tmp_path)


def test_stale_temp_dir_is_replaced(built, tmp_path):
    out, manifest = built
    inst = manifest["classes"][0]["instances"][0]
    stale = tmp_path / inst["dir"]
    stale.parent.mkdir(parents=True)
    (stale.parent / f".tmp_{stale.name}").mkdir()
    (stale.parent / f".tmp_{stale.name}" / "junk").write_text("x")
    stale.mkdir()
    (stale / "old.png").write_text("x")
    render_manifest(manifest, tmp_path)
    assert not (stale / "old.png").exists()
    assert not list(tmp_path.rglob(".tmp_*"))


def test_validation_split_default():
    assert DatasetSpec(instances=100).val_per_class == 10
    assert DatasetSpec(instances=3).val_per_class == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(classes=0)
    with pytest.raises(ValueError):
        DatasetSpec(motion={"spin": [0, 1]})
    with pytest.raises(ValueError):
        DatasetSpec.from_dict({"colour": "red"})
    with pytest.raises(ValueError):
        DatasetSpec(jitter=1.5)
    spec = small_spec(strategy="svd")
    assert DatasetSpec.from_dict(spec.to_dict()) == spec


def test_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        render_manifest({"format": "other"}, tmp_path)
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError, match="m.json"):
        load_manifest(bad)


def test_exhausted_generation_is_reported():
    spec = small_spec(classes=1, strategy="baseline",
                      filter={"variance_threshold": 0.99, "max_attempts": 5})
    with pytest.raises(GenerationFailed, match="class 0"):
        build_manifest(spec)
