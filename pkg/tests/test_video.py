import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalforge.linalg import rotation_from_euler
from fractalforge.video import (
    MAX_FRAMES,
    MIN_FRAMES,
    Easing,
    MotionProfile,
    MotionRanges,
    ease,
    frame_times,
    jitter_profile,
    render_sequence_clouds,
    sample_motion_profile,
    sample_t_count,
    shear_matrix,
    transform_at,
)


@pytest.mark.parametrize("mode", list(Easing))
def test_ease_endpoints(mode):
    assert ease(0.0, mode) == 0.0
    assert ease(1.0, mode) == 1.0


def test_sine_ease_values():
    assert ease(0.5, Easing.SINE) == pytest.approx(0.5, abs=1e-15)
    assert ease(0.25, Easing.SINE) == pytest.approx((1 - math.sqrt(0.5)) / 2, abs=1e-15)
    assert ease(0.25, Easing.SINE) == pytest.approx(0.14645, abs=1e-5)
    assert ease(0.3, Easing.LINEAR) == 0.3


@pytest.mark.parametrize("t", [-0.01, 1.01, float("nan")])
def test_ease_rejects_out_of_range(t):
    with pytest.raises(ValueError):
        ease(t)


@given(st.floats(0, 1), st.floats(0, 1))
def test_sine_ease_monotone_and_symmetric(a, b):
    lo, hi = min(a, b), max(a, b)
    assert ease(lo) <= ease(hi)
    assert ease(1 - a) == pytest.approx(1 - ease(a), abs=1e-12)


def test_easing_choice_is_fair():
    rng = np.random.default_rng(17)
    n = 10_000
    sine = sum(sample_motion_profile(rng).easing is Easing.SINE for _ in range(n))
    assert abs(sine - n / 2) < 3 * math.sqrt(n / 4)


def test_profile_values_within_ranges():
    r = MotionRanges()
    rng = np.random.default_rng(2)
    for _ in range(200):
        p = sample_motion_profile(rng, r)
        for name in ("rotation", "translation", "shear", "warp_amplitude", "warp_frequency", "warp_phase"):
            lo, hi = getattr(r, name)
            v = getattr(p, name)
            assert (v >= lo).all() and (v <= hi).all()


def test_zero_width_ranges_give_that_value():
    r = MotionRanges(rotation=(0, 0), translation=(0.2, 0.2), shear=(0, 0),
                     warp_amplitude=(0, 0), sine_probability=0.0)
    p = sample_motion_profile(np.random.default_rng(0), r)
    np.testing.assert_array_equal(p.translation, [0.2, 0.2, 0.2])
    assert p.easing is Easing.LINEAR
    ident = MotionRanges(rotation=(0, 0), translation=(0, 0), shear=(0, 0), warp_amplitude=(0, 0))
    assert sample_motion_profile(np.random.default_rng(0), ident).is_identity()


def test_ranges_validation():
    with pytest.raises(ValueError):
        MotionRanges(shear=(0.3, -0.3))
    with pytest.raises(ValueError):
        MotionRanges(sine_probability=1.5)
    with pytest.raises(ValueError):
        MotionRanges.from_dict({"spin": [0, 1]})
    r = MotionRanges.from_dict({"translation": [-1, 1]})
    assert MotionRanges.from_dict(r.to_dict()) == r


def test_translation_only_midpoint():
    p = MotionProfile(translation=[1.0, 0.0, 0.0], easing=Easing.LINEAR)
    cloud = np.random.default_rng(0).uniform(-1, 1, (50, 3))
    np.testing.assert_allclose(transform_at(p, 0.5, cloud), cloud + [0.5, 0, 0], atol=1e-15)


def test_rotation_only_preserves_norms():
    p = MotionProfile(rotation=[0.3, -0.7, 1.1], easing=Easing.SINE)
    cloud = np.random.default_rng(1).normal(size=(100, 3))
    out = transform_at(p, 0.6, cloud)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.linalg.norm(cloud, axis=1), rtol=1e-12)


def test_composition_order():
    # shear first, then rotation, then translation, evaluated point by point
    p = MotionProfile(rotation=[0.4, 0.2, -0.3], translation=[0.1, -0.2, 0.3],
                      shear=[0.2, -0.1, 0.25], easing=Easing.LINEAR)
    cloud = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    e = 0.7
    rot = rotation_from_euler(*(e * p.rotation))
    sh = shear_matrix(e * p.shear)
    expected = np.array([rot @ (sh @ x) + e * p.translation for x in cloud])
    np.testing.assert_allclose(transform_at(p, e, cloud), expected, atol=1e-14)


def test_shear_matrix_layout():
    np.testing.assert_array_equal(shear_matrix([1, 2, 3]), [[1, 1, 2], [0, 1, 3], [0, 0, 1]])


def test_warp_closed_form():
    amp, freq, phase = np.array([0.1, 0.2, 0.05]), np.array([2.0, 3.0, 1.0]), np.array([0.5, 1.0, 0.0])
    p = MotionProfile(warp_amplitude=amp, warp_frequency=freq, warp_phase=phase, easing=Easing.LINEAR)
    cloud = np.random.default_rng(3).uniform(-1, 1, (30, 3))
    out = transform_at(p, 1.0, cloud)
    for x, y in zip(cloud, out):
        for k in range(3):
            assert y[k] == pytest.approx(x[k] + amp[k] * math.sin(freq[k] * x[k] + phase[k]), abs=1e-15)


def test_sequence_frames():
    rng = np.random.default_rng(4)
    p = sample_motion_profile(rng)
    cloud = rng.uniform(-1, 1, (200, 3))
    seq = render_sequence_clouds(p, cloud, 19)
    assert len(seq) == 19 and len(seq.frames) == 19
    np.testing.assert_array_equal(seq.frames[0], cloud)
    np.testing.assert_array_equal(seq.frames[-1], transform_at(p, 1.0, cloud))
    np.testing.assert_array_equal(frame_times(19)[[0, -1]], [0.0, 1.0])


@pytest.mark.parametrize("t", [MIN_FRAMES - 1, MAX_FRAMES + 1])
def test_sequence_length_validation(t):
    with pytest.raises(ValueError):
        render_sequence_clouds(MotionProfile(), np.zeros((3, 3)), t)


def test_frame_count_distribution():
    rng = np.random.default_rng(5)
    counts = {sample_t_count(rng) for _ in range(500)}
    assert counts == {18, 19, 20}


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(MIN_FRAMES, MAX_FRAMES))
def test_temporal_coherence(seed, t_count):
    rng = np.random.default_rng(seed)
    p = sample_motion_profile(rng)
    cloud = rng.uniform(-1, 1, (100, 3))
    # Lipschitz constant in eased time, from a fine polygonal path
    lin = MotionProfile(**{k: v for k, v in p.to_dict().items() if k != "easing"}, easing="linear")
    grid = np.linspace(0, 1, 2001)
    path = [transform_at(lin, float(e), cloud) for e in grid]
    lip = max(np.linalg.norm(b - a, axis=1).max() for a, b in zip(path, path[1:])) / (grid[1] - grid[0])
    slope = math.pi / 2 if p.easing is Easing.SINE else 1.0
    seq = render_sequence_clouds(p, cloud, t_count).frames
    step = max(np.linalg.norm(b - a, axis=1).max() for a, b in zip(seq, seq[1:]))
    assert step <= 1.01 * lip * slope / (t_count - 1)


def test_profile_json_round_trip():
    p = sample_motion_profile(np.random.default_rng(6))
    assert MotionProfile.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        MotionProfile(rotation=[np.nan, 0, 0])


def test_jitter():
    rng = np.random.default_rng(7)
    p = sample_motion_profile(rng)
    j = jitter_profile(p, rng, 0.1)
    assert j.easing == p.easing
    for name in ("rotation", "translation", "warp_frequency"):
        ratio = getattr(j, name) / getattr(p, name)
        assert (np.abs(ratio - 1) <= 0.1 + 1e-12).all()
    assert jitter_profile(p, rng, 0.0) == p
    assert jitter_profile(MotionProfile(), rng).is_identity()
    with pytest.raises(ValueError):
        jitter_profile(p, rng, -0.1)
