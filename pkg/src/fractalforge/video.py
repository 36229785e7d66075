"""Per-class motion profiles and the frame-by-frame transformation of a cloud.

Each frame applies, in this order: shear, rotation (intrinsic Z-Y-X), translation
and a sinusoidal displacement warp, every component scaled by the eased time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import rotation_from_euler

MIN_FRAMES = 18
MAX_FRAMES = 20
DEFAULT_JITTER = 0.1


class Easing(str, enum.Enum):
    LINEAR = "linear"
    SINE = "sine"


def ease(t_norm: float, mode: Easing = Easing.SINE) -> float:
    """Linear: t.  Sine ease-in-out: (1 - cos(pi t)) / 2."""
    if not 0.0 <= t_norm <= 1.0:
        raise ValueError(f"t_norm must be in [0, 1], got {t_norm}")
    if Easing(mode) is Easing.LINEAR:
        return float(t_norm)
    return (1.0 - math.cos(math.pi * t_norm)) / 2.0


def _range(v) -> tuple[float, float]:
    lo, hi = (float(x) for x in v)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValueError(f"bad range {v!r}")
    return lo, hi


@dataclass
class MotionRanges:
    """Sampling ranges (lo, hi) applied per axis."""

    rotation: tuple = (-math.pi / 2, math.pi / 2)
    translation: tuple = (-0.5, 0.5)
    shear: tuple = (-0.3, 0.3)
    warp_amplitude: tuple = (0.0, 0.2)
    warp_frequency: tuple = (1.0, 4.0)
    warp_phase: tuple = (0.0, 2 * math.pi)
    sine_probability: float = 0.5

    def __post_init__(self):
        for name in ("rotation", "translation", "shear", "warp_amplitude",
                     "warp_frequency", "warp_phase"):
            setattr(self, name, _range(getattr(self, name)))
        if not 0.0 <= self.sine_probability <= 1.0:
            raise ValueError("sine_probability must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "MotionRanges":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown motion range keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


_VEC_FIELDS = ("rotation", "translation", "shear", "warp_amplitude", "warp_frequency", "warp_phase")


@dataclass
class MotionProfile:
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # yaw, pitch, roll
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shear: np.ndarray = field(default_factory=lambda: np.zeros(3))  # xy, xz, yz
    warp_amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    warp_frequency: np.ndarray = field(default_factory=lambda: np.zeros(3))
    warp_phase: np.ndarray = field(default_factory=lambda: np.zeros(3))
    easing: Easing = Easing.LINEAR

    def __post_init__(self):
        for name in _VEC_FIELDS:
            v = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            if not np.isfinite(v).all():
                raise ValueError(f"motion parameter {name} must be finite")
            setattr(self, name, v)
        self.easing = Easing(self.easing)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionProfile):
            return NotImplemented
        return self.easing == other.easing and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in _VEC_FIELDS)

    def to_dict(self) -> dict:
        d = {f: getattr(self, f).tolist() for f in _VEC_FIELDS}
        d["easing"] = self.easing.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MotionProfile":
        return cls(**{f: d[f] for f in _VEC_FIELDS}, easing=d["easing"])

    def is_identity(self) -> bool:
        return not (self.rotation.any() or self.translation.any() or self.shear.any()
                    or self.warp_amplitude.any())


def sample_motion_profile(rng: np.random.Generator, ranges: MotionRanges | None = None) -> MotionProfile:
    """One profile per class; easing is sine or linear with equal odds by default."""
    r = ranges or MotionRanges()
    vals = {}
    for name in _VEC_FIELDS:
        lo, hi = getattr(r, name)
        vals[name] = lo + (hi - lo) * rng.random(3)
    easing = Easing.SINE if rng.random() < r.sine_probability else Easing.LINEAR
    return MotionProfile(**vals, easing=easing)


def jitter_profile(profile: MotionProfile, rng: np.random.Generator,
                   fraction: float = DEFAULT_JITTER) -> MotionProfile:
    """Instance-level variation: every parameter scaled by (1 + fraction * U(-1, 1)).

    Multiplicative, so an identity profile stays the identity.
    """
    if fraction < 0:
        raise ValueError("jitter fraction must be >= 0")
    if fraction == 0:
        return MotionProfile(**{f: getattr(profile, f).copy() for f in _VEC_FIELDS},
                             easing=profile.easing)
    scale = 1.0 + fraction * rng.uniform(-1.0, 1.0, size=(len(_VEC_FIELDS), 3))
    return MotionProfile(**{f: getattr(profile, f) * scale[i] for i, f in enumerate(_VEC_FIELDS)},
                         easing=profile.easing)


def sample_t_count(rng: np.random.Generator) -> int:
    return int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1))


def shear_matrix(coeffs) -> np.ndarray:
    xy, xz, yz = coeffs
    return np.array([[1.0, xy, xz], [0.0, 1.0, yz], [0.0, 0.0, 1.0]])


def transform_at(profile: MotionProfile, t_norm: float, cloud: np.ndarray) -> np.ndarray:
    """Apply the profile at normalised time ``t_norm`` to an (m, 3) cloud."""
    e = ease(t_norm, profile.easing)
    cloud = np.asarray(cloud, dtype=np.float64)
    if e == 0.0:
        return cloud.copy()
    m = rotation_from_euler(*(e * profile.rotation)) @ shear_matrix(e * profile.shear)
    p = cloud @ m.T + e * profile.translation
    if profile.warp_amplitude.any():
        p = p + (e * profile.warp_amplitude) * np.sin(profile.warp_frequency * p + profile.warp_phase)
    return p


@dataclass
class FrameSequence:
    frames: list
    t_count: int

    def __post_init__(self):
        if len(self.frames) != self.t_count:
            raise ValueError("frame count must equal t_count")

    def __len__(self) -> int:
        return self.t_count


def frame_times(t_count: int) -> np.ndarray:
    return np.arange(t_count) / (t_count - 1)


def render_sequence_clouds(profile: MotionProfile, cloud: np.ndarray, t_count: int) -> FrameSequence:
    """Frame k is ``transform_at(profile, k / (t_count - 1), cloud)``."""
    if not MIN_FRAMES <= t_count <= MAX_FRAMES:
        raise ValueError(f"t_count must be in [{MIN_FRAMES}, {MAX_FRAMES}], got {t_count}")
    return FrameSequence([transform_at(profile, float(t), cloud) for t in frame_times(t_count)],
                         t_count)
