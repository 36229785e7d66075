"""Chaos Game point clouds and their second-order statistics."""

from __future__ import annotations

import math
from pathlib import Path

import numba
import numpy as np

from .ifs import IfsSystem

DEFAULT_POINTS = 10_000
DEFAULT_BURN_IN = 100
DIVERGENCE_BOUND = 1e6

PointCloud = np.ndarray  # (m, 3) float64


class DivergenceError(RuntimeError):
    """The orbit left the |x| <= 1e6 box or stopped being finite."""

    def __init__(self, step: int):
        super().__init__(f"chaos game diverged at step {step}")
        self.step = step


@numba.njit(cache=True)
def _iterate(a, b, cum, u, burn_in, out, bound, s):
    n = a.shape[0]
    m = out.shape[0]
    x0 = s[0]
    x1 = s[1]
    x2 = s[2]
    for t in range(burn_in + m):
        r = u[t]
        k = 0
        while k < n - 1 and r >= cum[k]:
            k += 1
        y0 = a[k, 0, 0] * x0 + a[k, 0, 1] * x1 + a[k, 0, 2] * x2 + b[k, 0]
        y1 = a[k, 1, 0] * x0 + a[k, 1, 1] * x1 + a[k, 1, 2] * x2 + b[k, 1]
        y2 = a[k, 2, 0] * x0 + a[k, 2, 1] * x1 + a[k, 2, 2] * x2 + b[k, 2]
        x0 = y0
        x1 = y1
        x2 = y2
        if not (abs(x0) <= bound and abs(x1) <= bound and abs(x2) <= bound):
            return t
        if t >= burn_in:
            j = t - burn_in
            out[j, 0] = x0
            out[j, 1] = x1
            out[j, 2] = x2
    return -1


def chaos_game(
    system: IfsSystem,
    m: int = DEFAULT_POINTS,
    burn_in: int = DEFAULT_BURN_IN,
    rng: np.random.Generator | None = None,
    start=None,
) -> PointCloud:
    """Run the Chaos Game from the origin and record ``m`` points after burn-in.

    Raises DivergenceError as soon as a coordinate leaves [-1e6, 1e6].
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    a = np.ascontiguousarray(system.matrices)
    b = np.ascontiguousarray(system.translations)
    cum = np.cumsum(system.probs)
    u = rng.random(burn_in + m)
    out = np.empty((m, 3))
    s0 = np.zeros(3) if start is None else np.asarray(start, dtype=np.float64).reshape(3)
    step = _iterate(a, b, cum, u, burn_in, out, DIVERGENCE_BOUND, s0)
    if step >= 0:
        raise DivergenceError(step)
    return out


def axis_variances(cloud: PointCloud) -> np.ndarray:
    """Population variance of x, y and z."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.shape[0] < 2:
        raise ValueError("need at least two points")
    return cloud.var(axis=0)


def covariance_eigenvalues(cloud: PointCloud) -> np.ndarray:
    """Eigenvalues of the (population) covariance matrix, descending, >= 0."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.shape[0] < 2:
        raise ValueError("need at least two points")
    centered = cloud - cloud.mean(axis=0)
    cov = centered.T @ centered / cloud.shape[0]
    ev = np.linalg.eigvalsh(cov)[::-1]
    return np.where(ev < 0.0, 0.0, ev)


def normalize_cloud(cloud: PointCloud) -> PointCloud:
    """Centre on the centroid and scale uniformly so max |coordinate| is 1."""
    cloud = np.asarray(cloud, dtype=np.float64)
    centered = cloud - cloud.mean(axis=0)
    extent = np.abs(centered).max() if centered.size else 0.0
    if not math.isfinite(extent) or extent == 0.0:
        return centered
    return centered / extent


def save_cloud(cloud: PointCloud, path) -> None:
    """Write ``.ply`` (ASCII) or any other extension as raw little-endian float64."""
    path = Path(path)
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    try:
        if path.suffix.lower() == ".ply":
            with path.open("w", encoding="ascii", newline="\n") as fh:
                fh.write("ply\nformat ascii 1.0\n")
                fh.write(f"element vertex {len(cloud)}\n")
                fh.write("property float x\nproperty float y\nproperty float z\nend_header\n")
                np.savetxt(fh, cloud, fmt="%.9g")
        else:
            path.write_bytes(cloud.astype("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write point cloud to {path}: {exc}") from exc


def load_cloud(path) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        with path.open("r", encoding="ascii") as fh:
            count = None
            for line in fh:
                line = line.strip()
                if line.startswith("element vertex"):
                    count = int(line.split()[-1])
                if line == "end_header":
                    break
            data = np.loadtxt(fh, ndmin=2)
        if count is not None and len(data) != count:
            raise ValueError(f"{path}: header says {count} vertices, found {len(data)}")
        return data.reshape(-1, 3)
    return np.frombuffer(path.read_bytes(), dtype="<f8").reshape(-1, 3).copy()
