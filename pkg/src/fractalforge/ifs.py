"""IFS data model and parameter samplers."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numba
import numpy as np

from .linalg import _det3, rotations_from_euler, rotations_from_quaternions

MIN_MAPS = 2
MAX_MAPS = 8
PROB_FLOOR = 1e-12
# sigma is drawn from [0, 1); keep a margin so the rebuilt matrix stays < 1
# after U @ diag(s) @ V.T rounding.
_SIGMA_CAP = 1.0 - 1e-12


class Provenance(str, enum.Enum):
    NAIVE = "naive"
    SVD_CONTROLLED = "svd_controlled"


class RotationMode(str, enum.Enum):
    EULER = "euler"
    QUATERNION = "quaternion"


@dataclass
class AffineMap3:
    a: np.ndarray  # (3, 3)
    b: np.ndarray  # (3,)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(3, 3)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise ValueError("affine map parameters must be finite")


class IfsSystem:
    """N affine maps x -> a[i] @ x + b[i] with selection probabilities.

    Parameters live in two arrays, ``a`` (N, 3, 3) and ``b`` (N, 3); ``maps``
    gives the per-map view.  Probabilities default to |det|-proportional.
    """

    __slots__ = ("a", "b", "probs", "provenance", "seed")

    def __init__(self, a, b, probs=None, provenance=Provenance.NAIVE, seed=None):
        a = np.array(a, dtype=np.float64).reshape(-1, 3, 3)
        b = np.array(b, dtype=np.float64).reshape(-1, 3)
        # samplers enforce 2..8; hand-built systems may be smaller
        if not 1 <= len(a) <= MAX_MAPS:
            raise ValueError(f"IFS needs 1..{MAX_MAPS} maps, got {len(a)}")
        if len(b) != len(a):
            raise ValueError("need one translation per matrix")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("IFS parameters must be finite")
        self.a, self.b = a, b
        if probs is None:
            self.probs = probabilities_from_matrices(a)
        else:
            p = np.asarray(probs, dtype=np.float64)
            if p.shape != (len(a),):
                raise ValueError("one probability per map required")
            if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("probabilities must be non-negative and sum to 1")
            self.probs = p
        self.provenance = Provenance(provenance)
        self.seed = seed

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def maps(self) -> list[AffineMap3]:
        return [AffineMap3(ai, bi) for ai, bi in zip(self.a, self.b)]

    # aliases used by the numeric kernels
    matrices = property(lambda self: self.a)
    translations = property(lambda self: self.b)

    @classmethod
    def from_maps(cls, maps, probs=None, provenance=Provenance.NAIVE, seed=None) -> "IfsSystem":
        maps = list(maps)
        if not maps:
            raise ValueError("IFS needs at least one map")
        return cls([m.a for m in maps], [m.b for m in maps], probs, provenance, seed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IfsSystem):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and np.array_equal(self.probs, other.probs)
                and self.provenance == other.provenance)

    def __repr__(self) -> str:
        return f"IfsSystem(n={self.n}, provenance={self.provenance.value})"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "maps": [{"a": ai.ravel().tolist(), "b": bi.tolist()} for ai, bi in zip(self.a, self.b)],
            "probs": self.probs.tolist(),
            "provenance": self.provenance.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IfsSystem":
        maps = d["maps"]
        if "n" in d and d["n"] != len(maps):
            raise ValueError(f"record says n={d['n']} but holds {len(maps)} maps")
        return cls([m["a"] for m in maps], [m["b"] for m in maps], d.get("probs"),
                   d.get("provenance", "naive"), d.get("seed"))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "IfsSystem":
        return cls.from_dict(json.loads(text))


@numba.njit(cache=True)
def _abs_dets(a):
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        out[i] = abs(_det3(a[i]))
    return out


def probabilities_from_matrices(a: np.ndarray) -> np.ndarray:
    dets = _abs_dets(np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3, 3))
    total = dets.sum()
    if total <= PROB_FLOOR:
        return np.full(len(dets), 1.0 / len(dets))
    return dets / total


def selection_probabilities(system: IfsSystem) -> np.ndarray:
    """p_i proportional to |det A_i|, uniform if every map is (near) singular."""
    return probabilities_from_matrices(system.a)


def sample_system_size(rng: np.random.Generator) -> int:
    return int(rng.integers(MIN_MAPS, MAX_MAPS + 1))


def _check_n(n: int) -> None:
    if not MIN_MAPS <= n <= MAX_MAPS:
        raise ValueError(f"n must be in [{MIN_MAPS}, {MAX_MAPS}], got {n}")


def sample_naive(rng: np.random.Generator, n: int) -> IfsSystem:
    """All 12 parameters of each map drawn iid from U(-1, 1)."""
    _check_n(n)
    params = rng.uniform(-1.0, 1.0, size=(n, 12))
    return IfsSystem(params[:, :9], params[:, 9:], provenance=Provenance.NAIVE)


def random_rotations(rng: np.random.Generator, k: int, mode: RotationMode) -> np.ndarray:
    """``k`` random rotations.

    Euler mode draws each angle uniformly over its natural range (yaw and roll
    in [-pi, pi), pitch in [-pi/2, pi/2)); quaternion mode normalises a 4D
    standard normal, which is uniform over SO(3).
    """
    mode = RotationMode(mode)
    if mode is RotationMode.EULER:
        ang = rng.uniform(-1.0, 1.0, size=(3, k)) * np.array([[math.pi], [math.pi / 2], [math.pi]])
        return rotations_from_euler(ang[0], ang[1], ang[2])
    q = rng.standard_normal((k, 4))
    zero = ~q.any(axis=1)
    while zero.any():  # measure zero, but the constructor rejects it
        q[zero] = rng.standard_normal((int(zero.sum()), 4))
        zero = ~q.any(axis=1)
    return rotations_from_quaternions(q)


def sample_svd_matrices(rng: np.random.Generator, k: int,
                        mode: RotationMode = RotationMode.EULER):
    """Build ``k`` matrices A = U diag(s) V^T with s ~ U(0, 1).

    Returns ``(a, s)``; ``s`` holds the sampled singular values (unsorted).
    """
    u = random_rotations(rng, k, mode)
    v = random_rotations(rng, k, mode)
    s = np.minimum(rng.uniform(0.0, 1.0, size=(k, 3)), _SIGMA_CAP)
    a = (u * s[:, None, :]) @ v.transpose(0, 2, 1)
    return a, s


def sample_svd_controlled(
    rng: np.random.Generator, n: int, rotation_mode: RotationMode = RotationMode.EULER
) -> IfsSystem:
    """Contractive-by-construction IFS; translations stay U(-1, 1)."""
    _check_n(n)
    a, _ = sample_svd_matrices(rng, n, rotation_mode)
    b = rng.uniform(-1.0, 1.0, size=(n, 3))
    return IfsSystem(a, b, provenance=Provenance.SVD_CONTROLLED)


def substreams(seed, count: int) -> list[np.random.Generator]:
    """Independent generators spawned from one seed (one per class/worker)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(count)]
