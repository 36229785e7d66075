"""Software rasteriser: point clouds to 256x256 depth-coloured RGB frames."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

WIDTH = 256
HEIGHT = 256
DEFAULT_SPLAT_RADIUS = 1


@lru_cache(maxsize=1)
def viridis_table() -> np.ndarray:
    """The 256-entry viridis table as floats in [0, 1], shape (256, 3)."""
    text = resources.files(__package__).joinpath("data/viridis.json").read_text()
    table = np.array(json.loads(text)["entries"], dtype=np.float64)
    table.setflags(write=False)
    return table


def viridis_many(z) -> np.ndarray:
    """Vectorised colormap lookup: z in [0, 1] (clamped) -> (..., 3) uint8.

    Linear interpolation between neighbouring table entries, then rounding.
    """
    table = viridis_table()
    z = np.clip(np.nan_to_num(np.asarray(z, dtype=np.float64), nan=0.0), 0.0, 1.0)
    pos = z * (len(table) - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), len(table) - 2)
    frac = (pos - lo)[..., None]
    rgb = table[lo] * (1.0 - frac) + table[lo + 1] * frac
    return np.rint(rgb * 255.0).astype(np.uint8)


def viridis(z_norm: float) -> tuple[int, int, int]:
    r, g, b = viridis_many(z_norm)
    return int(r), int(g), int(b)


class Projection(str, enum.Enum):
    PERSPECTIVE = "perspective"
    ORTHOGRAPHIC = "orthographic"


def _vec(v) -> np.ndarray:
    v = np.array(v, dtype=np.float64).reshape(3)
    if not np.isfinite(v).all():
        raise ValueError("camera vectors must be finite")
    return v


@dataclass
class Camera:
    """Pinhole (or orthographic) camera looking from ``position`` at ``look_at``."""

    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 3.5]))
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    projection: Projection = Projection.PERSPECTIVE
    fov_deg: float = 45.0
    ortho_half_height: float = 1.5  # world units visible above the centre line
    near: float = 1e-3
    far: float = 1e3
    width: int = WIDTH
    height: int = HEIGHT

    def __post_init__(self):
        self.position, self.look_at, self.up = _vec(self.position), _vec(self.look_at), _vec(self.up)
        self.projection = Projection(self.projection)
        forward = self.look_at - self.position
        if np.linalg.norm(forward) == 0.0:
            raise ValueError("camera position and look_at coincide")
        self._f = forward / np.linalg.norm(forward)
        side = np.cross(self._f, self.up)
        if np.linalg.norm(side) < 1e-9 * np.linalg.norm(self.up):
            raise ValueError("camera up vector is parallel to the view direction")
        self._r = side / np.linalg.norm(side)
        self._u = np.cross(self._r, self._f)
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov_deg must be in (0, 180)")
        if not 0.0 <= self.near < self.far:
            raise ValueError("need 0 <= near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(), "look_at": self.look_at.tolist(),
            "up": self.up.tolist(), "projection": self.projection.value,
            "fov_deg": self.fov_deg, "ortho_half_height": self.ortho_half_height,
            "near": self.near, "far": self.far, "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown camera keys: {sorted(unknown)}")
        return cls(**d)

    def depths(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.position) @ self._f

    def project(self, points: np.ndarray):
        """Return pixel coordinates (x right, y down), view depth and a visibility mask."""
        rel = np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.position
        xc, yc, depth = rel @ self._r, rel @ self._u, rel @ self._f
        if self.projection is Projection.PERSPECTIVE:
            focal = (self.height / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                sx, sy = focal * xc / depth, focal * yc / depth
        else:
            scale = (self.height / 2.0) / self.ortho_half_height
            sx, sy = scale * xc, scale * yc
        px = self.width / 2.0 + sx
        py = self.height / 2.0 - sy
        visible = (depth > self.near) & (depth < self.far) & np.isfinite(px) & np.isfinite(py)
        return px, py, depth, visible


@dataclass
class Frame:
    pixels: np.ndarray  # (height, width, 3) uint8
    drawn: int = 0  # number of points that touched the viewport

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("frame pixels must be (h, w, 3) uint8")

    width = property(lambda self: self.pixels.shape[1])
    height = property(lambda self: self.pixels.shape[0])

    def is_black(self) -> bool:
        return not self.pixels.any()

    @classmethod
    def black(cls, width: int = WIDTH, height: int = HEIGHT) -> "Frame":
        return cls(np.zeros((height, width, 3), dtype=np.uint8))


@lru_cache(maxsize=16)
def disc_offsets(radius: int) -> np.ndarray:
    """Integer (dx, dy) with dx^2 + dy^2 <= radius^2."""
    if radius < 0:
        raise ValueError("splat radius must be >= 0")
    r = int(radius)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dx * dx + dy * dy <= r * r
    return np.stack([dx[keep], dy[keep]], axis=1)


def depth_range(cloud: np.ndarray, cam: Camera) -> tuple[float, float]:
    """(nearest, farthest) view depth among the points in front of the camera."""
    _, _, depth, visible = cam.project(cloud)
    d = depth[visible]
    if d.size == 0:
        return (cam.near, cam.far)
    return float(d.min()), float(d.max())


def rasterize(cloud: np.ndarray, cam: Camera | None = None,
              splat_radius: int = DEFAULT_SPLAT_RADIUS, z_range=None) -> Frame:
    """Z-buffered splatting of every point as a filled disc.

    Colour is viridis of the normalised depth, nearest -> 1.0 and farthest ->
    0.0 over ``z_range`` (the cloud's own range when not given).  Among
    fragments landing on one pixel the nearest wins; exact depth ties go to
    the earlier point.
    """
    cam = cam or Camera()
    w, h = cam.width, cam.height
    px, py, depth, visible = cam.project(cloud)
    idx = np.flatnonzero(visible)
    frame = np.zeros((h * w, 3), dtype=np.uint8)
    if idx.size == 0:
        return Frame(frame.reshape(h, w, 3), 0)

    near, far = z_range if z_range is not None else (depth[idx].min(), depth[idx].max())
    span = far - near
    z = np.ones(idx.size) if span <= 0 else (far - depth[idx]) / span
    colors = viridis_many(z)

    # clip before the integer cast so points near the eye cannot overflow
    r = splat_radius + 1
    col = np.floor(np.clip(px[idx], -r - 1, w + r)).astype(np.int64)
    row = np.floor(np.clip(py[idx], -r - 1, h + r)).astype(np.int64)
    off = disc_offsets(splat_radius)
    cols = (col[:, None] + off[None, :, 0]).ravel()
    rows = (row[:, None] + off[None, :, 1]).ravel()
    owner = np.repeat(np.arange(idx.size), len(off))
    inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    if not inside.any():
        return Frame(frame.reshape(h, w, 3), 0)
    pix = rows[inside] * w + cols[inside]
    owner = owner[inside]
    # sort by pixel, then depth, then point order; first of each pixel run wins
    order = np.lexsort((owner, depth[idx][owner], pix))
    pix, owner = pix[order], owner[order]
    first = np.ones(pix.size, dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    frame[pix[first]] = colors[owner[first]]
    return Frame(frame.reshape(h, w, 3), int(np.unique(owner).size))


def render_frames(clouds, cam: Camera | None = None,
                  splat_radius: int = DEFAULT_SPLAT_RADIUS) -> list[Frame]:
    """Rasterise a sequence with one depth range, taken from the first cloud."""
    cam = cam or Camera()
    clouds = list(clouds)
    if not clouds:
        return []
    z_range = depth_range(clouds[0], cam)
    return [rasterize(c, cam, splat_radius, z_range) for c in clouds]


def write_frame_png(frame: Frame, path) -> None:
    path = Path(path)
    try:
        Image.fromarray(frame.pixels, "RGB").save(path, format="PNG", compress_level=6)
    except OSError as exc:
        raise OSError(f"cannot write frame to {path}: {exc}") from exc


def read_frame_png(path) -> Frame:
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise ValueError(f"{path}: expected an RGB image, got mode {im.mode}")
            return Frame(np.array(im, dtype=np.uint8))
    except OSError as exc:
        raise OSError(f"cannot read frame from {path}: {exc}") from exc


def contact_sheet(frames, cols: int = 6) -> Frame:
    """Tile frames row-major into one image; missing tiles stay black."""
    frames = list(frames)
    if not frames:
        return Frame.black()
    h, w = frames[0].height, frames[0].width
    rows = -(-len(frames) // cols)
    sheet = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    for k, f in enumerate(frames):
        r, c = divmod(k, cols)
        sheet[r * h:(r + 1) * h, c * w:(c + 1) * w] = f.pixels
    return Frame(sheet, sum(f.drawn for f in frames))
