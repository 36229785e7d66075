import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalforge.render import (
    HEIGHT,
    WIDTH,
    Camera,
    Frame,
    Projection,
    contact_sheet,
    disc_offsets,
    rasterize,
    read_frame_png,
    render_frames,
    viridis,
    viridis_many,
    viridis_table,
    write_frame_png,
)

YELLOW = (253, 231, 37)
PURPLE = (68, 1, 84)


def test_viridis_endpoints():
    assert viridis(0.0) == PURPLE
    assert viridis(1.0) == YELLOW
    assert viridis(-3.0) == PURPLE and viridis(7.0) == YELLOW


def test_viridis_matches_matplotlib():
    mpl = pytest.importorskip("matplotlib")
    ref = mpl.colormaps["viridis"](np.arange(256))[:, :3]
    np.testing.assert_array_equal(viridis_table(), ref)
    ours = viridis_many(np.arange(256) / 255).astype(int)
    assert np.abs(ours - np.rint(ref * 255)).max() == 0
    # between table entries we interpolate, the reference snaps; both agree within a step
    z = np.random.default_rng(0).uniform(0, 1, 2000)
    snapped = np.rint(mpl.colormaps["viridis"](z)[:, :3] * 255)
    assert np.abs(viridis_many(z).astype(int) - snapped).max() <= 3


def test_viridis_luminance_increases():
    weights = [0.2126, 0.7152, 0.0722]
    assert (np.diff(viridis_table() @ weights) > 0).all()
    # the uint8 output may dip by rounding, never by a full count
    lum = viridis_many(np.linspace(0, 1, 256)).astype(float) @ weights
    assert np.diff(lum).min() > -1.0


def test_disc_offsets():
    assert len(disc_offsets(0)) == 1
    assert sorted(map(tuple, disc_offsets(1))) == [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]
    assert len(disc_offsets(2)) == 13
    with pytest.raises(ValueError):
        disc_offsets(-1)


def test_single_centred_point():
    f = rasterize(np.zeros((1, 3)))
    assert (f.width, f.height) == (WIDTH, HEIGHT)
    lit = np.argwhere(f.pixels.any(axis=2))
    assert sorted(map(tuple, lit)) == [(127, 128), (128, 127), (128, 128), (128, 129), (129, 128)]
    assert tuple(f.pixels[128, 128]) == YELLOW
    assert f.drawn == 1


def test_nearer_point_wins():
    # both on the optical axis; z = 0.5 is closer to the camera at z = 3.5
    pts = np.array([[0, 0, -0.5], [0, 0, 0.5]])
    for order in (pts, pts[::-1]):
        f = rasterize(order)
        assert tuple(f.pixels[128, 128]) == YELLOW


def test_depth_colours_inside_range():
    pts = np.array([[-0.5, 0, -1.0], [0.5, 0, 1.0]])
    f = rasterize(pts)
    px, py, _, _ = Camera().project(pts)
    far = f.pixels[int(py[0]), int(px[0])]
    near = f.pixels[int(py[1]), int(px[1])]
    assert tuple(far) == PURPLE and tuple(near) == YELLOW


def test_empty_and_offscreen_give_black():
    assert rasterize(np.zeros((0, 3))).is_black()
    assert rasterize(np.array([[0.0, 0.0, 10.0]])).is_black()  # behind the camera
    assert rasterize(np.array([[50.0, 0.0, 0.0]])).is_black()  # outside the viewport
    assert Frame.black().pixels.shape == (HEIGHT, WIDTH, 3)


def test_orthographic_projection_centre():
    cam = Camera(projection=Projection.ORTHOGRAPHIC)
    px, py, _, vis = cam.project(np.array([[0.0, 0.0, 0.0], [0.75, 0.0, 1.0]]))
    assert vis.all()
    assert (px[0], py[0]) == (128.0, 128.0)
    assert px[1] == pytest.approx(128 + 0.75 * 128 / 1.5)


def test_perspective_pinhole_oracle():
    cam = Camera()
    focal = 128 / np.tan(np.radians(22.5))
    p = np.array([[0.3, -0.2, 0.5]])
    px, py, depth, _ = cam.project(p)
    assert depth[0] == pytest.approx(3.0)
    assert px[0] == pytest.approx(128 + focal * 0.3 / 3.0)
    assert py[0] == pytest.approx(128 + focal * 0.2 / 3.0)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(up=[0, 0, 1])
    with pytest.raises(ValueError):
        Camera(position=[0, 0, 0])
    with pytest.raises(ValueError):
        Camera(fov_deg=0)
    with pytest.raises(ValueError):
        Camera.from_dict({"zoom": 2})
    cam = Camera(fov_deg=30, width=64, height=48)
    back = Camera.from_dict(cam.to_dict())
    assert back.to_dict() == cam.to_dict()


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_render_is_deterministic(seed):
    cloud = np.random.default_rng(seed).uniform(-1, 1, (500, 3))
    a, b = rasterize(cloud), rasterize(cloud)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    assert a.pixels.shape == (256, 256, 3) and a.pixels.dtype == np.uint8


def test_frames_share_depth_range():
    cloud = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, -1.0]])
    frames = render_frames([cloud, cloud + [0, 0, 0.5]])
    assert tuple(frames[0].pixels[128, 128]) == YELLOW
    # shifted nearer than the first frame's range, so still clamped to the top colour
    assert len(frames) == 2 and not frames[1].is_black()
    assert render_frames([]) == []


def test_png_round_trip(tmp_path):
    f = rasterize(np.random.default_rng(1).uniform(-1, 1, (2000, 3)))
    write_frame_png(f, tmp_path / "a.png")
    write_frame_png(f, tmp_path / "b.png")
    np.testing.assert_array_equal(read_frame_png(tmp_path / "a.png").pixels, f.pixels)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    with pytest.raises(OSError, match="missing"):
        write_frame_png(f, tmp_path / "missing" / "c.png")


def test_contact_sheet():
    frames = [rasterize(np.zeros((1, 3)))] * 7
    sheet = contact_sheet(frames, cols=3)
    assert sheet.pixels.shape == (3 * 256, 3 * 256, 3)
    np.testing.assert_array_equal(sheet.pixels[256:512, 256:512], frames[0].pixels)
    assert not sheet.pixels[512:, 256:].any()
