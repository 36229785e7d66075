"""3-vector / 3x3 matrix algebra with a one-sided Jacobi SVD.

Everything here works on float64 numpy arrays of shape (3, 3) or (3,).  The
hot kernels are numba-compiled so the filters can call them per candidate
without paying numpy's small-array overhead.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

Mat3 = np.ndarray  # shape (3, 3), float64
Vec3 = np.ndarray  # shape (3,), float64

_MAX_SWEEPS = 40
_EPS = 2.220446049250313e-16


class SvdResult(NamedTuple):
    u: Mat3
    sigma: np.ndarray  # descending, >= 0
    v: Mat3


@numba.njit(cache=True)
def _jacobi(w, v):
    # One-sided (Hestenes) Jacobi: orthogonalise the columns of w in place,
    # accumulating the same rotations into v.  On exit w = A @ v.
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(2):
            for q in range(p + 1, 3):
                alpha = w[0, p] * w[0, p] + w[1, p] * w[1, p] + w[2, p] * w[2, p]
                beta = w[0, q] * w[0, q] + w[1, q] * w[1, q] + w[2, q] * w[2, q]
                gamma = w[0, p] * w[0, q] + w[1, p] * w[1, q] + w[2, p] * w[2, q]
                if gamma == 0.0 or abs(gamma) <= _EPS * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for k in range(3):
                    wp = w[k, p]
                    wq = w[k, q]
                    w[k, p] = c * wp - s * wq
                    w[k, q] = s * wp + c * wq
                    vp = v[k, p]
                    vq = v[k, q]
                    v[k, p] = c * vp - s * vq
                    v[k, q] = s * vp + c * vq
        if not rotated:
            break


@numba.njit(cache=True)
def _column_norms(w, out):
    for j in range(3):
        out[j] = math.sqrt(w[0, j] * w[0, j] + w[1, j] * w[1, j] + w[2, j] * w[2, j])


@numba.njit(cache=True)
def _descending_order(s):
    i0, i1, i2 = 0, 1, 2
    if s[i0] < s[i1]:
        i0, i1 = i1, i0
    if s[i1] < s[i2]:
        i1, i2 = i2, i1
    if s[i0] < s[i1]:
        i0, i1 = i1, i0
    return i0, i1, i2


@numba.njit(cache=True)
def singular_values3(a):
    """Singular values of a 3x3 matrix, descending.  No U/V bookkeeping."""
    w = a.copy()
    v = np.eye(3)
    _jacobi(w, v)
    s = np.empty(3)
    _column_norms(w, s)
    i0, i1, i2 = _descending_order(s)
    out = np.empty(3)
    out[0] = s[i0]
    out[1] = s[i1]
    out[2] = s[i2]
    return out


@numba.njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@numba.njit(cache=True)
def _svd3_kernel(a):
    w = a.copy()
    vr = np.eye(3)
    _jacobi(w, vr)
    s = np.empty(3)
    _column_norms(w, s)
    order = _descending_order(s)

    u = np.zeros((3, 3))
    v = np.empty((3, 3))
    sigma = np.empty(3)
    for j in range(3):
        k = order[j]
        sigma[j] = s[k]
        for r in range(3):
            v[r, j] = vr[r, k]

    # Columns with (numerically) vanishing sigma carry no direction; complete
    # U to an orthonormal basis instead of dividing by ~0.
    tiny = 1e-12 * sigma[0]
    rank = 0
    for j in range(3):
        if sigma[j] > tiny and sigma[j] > 0.0:
            rank += 1
    for j in range(rank):
        k = order[j]
        for r in range(3):
            u[r, j] = w[r, k] / sigma[j]

    if rank == 0:
        for r in range(3):
            u[r, r] = 1.0
    if rank == 1:
        c0 = u[:, 0].copy()
        # pick the coordinate axis least aligned with u0
        ax = 0
        if abs(c0[1]) < abs(c0[ax]):
            ax = 1
        if abs(c0[2]) < abs(c0[ax]):
            ax = 2
        e = np.zeros(3)
        e[ax] = 1.0
        t = np.empty(3)
        _cross(c0, e, t)
        nt = math.sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2])
        for r in range(3):
            u[r, 1] = t[r] / nt
    if rank <= 2 and rank >= 1:
        c0 = u[:, 0].copy()
        c1 = u[:, 1].copy()
        t = np.empty(3)
        _cross(c0, c1, t)
        nt = math.sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2])
        for r in range(3):
            u[r, 2] = t[r] / nt
    return u, sigma, v


def svd3(a: Mat3) -> SvdResult:
    """Full SVD ``a = u @ diag(sigma) @ v.T`` of a 3x3 matrix.

    Singular values come out non-negative and sorted descending.  Rank
    deficient inputs are fine: the missing U columns are completed to an
    orthonormal basis and the matching sigma entries are ~0.
    """
    a = np.asarray(a, dtype=np.float64).reshape(3, 3)
    u, sigma, v = _svd3_kernel(np.ascontiguousarray(a))
    return SvdResult(u, sigma, v)


@numba.njit(cache=True)
def _det3(a):
    return (
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


def determinant(a: Mat3) -> float:
    """Cofactor-expansion determinant."""
    a = np.asarray(a, dtype=np.float64).reshape(3, 3)
    return float(_det3(np.ascontiguousarray(a)))


def spectral_norm(a: Mat3) -> float:
    """Largest singular value, ||a||_2."""
    a = np.asarray(a, dtype=np.float64).reshape(3, 3)
    return float(singular_values3(np.ascontiguousarray(a))[0])


def rotation_from_euler(yaw: float, pitch: float, roll: float) -> Mat3:
    """Intrinsic Z-Y-X rotation: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cz, sz = math.cos(yaw), math.sin(yaw)
    cy, sy = math.cos(pitch), math.sin(pitch)
    cx, sx = math.cos(roll), math.sin(roll)
    return np.array(
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    )


def rotation_from_quaternion(q) -> Mat3:
    """Rotation matrix of quaternion ``(w, x, y, z)``; normalised internally."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = math.sqrt(float(q @ q))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("quaternion must be finite and non-zero")
    w, x, y, z = q / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotations_from_euler(yaw, pitch, roll) -> np.ndarray:
    """Batched ``rotation_from_euler`` over equal-length angle arrays -> (k, 3, 3)."""
    yaw, pitch, roll = (np.asarray(v, dtype=np.float64) for v in (yaw, pitch, roll))
    cz, sz = np.cos(yaw), np.sin(yaw)
    cy, sy = np.cos(pitch), np.sin(pitch)
    cx, sx = np.cos(roll), np.sin(roll)
    r = np.empty(yaw.shape + (3, 3))
    r[..., 0, 0] = cz * cy
    r[..., 0, 1] = cz * sy * sx - sz * cx
    r[..., 0, 2] = cz * sy * cx + sz * sx
    r[..., 1, 0] = sz * cy
    r[..., 1, 1] = sz * sy * sx + cz * cx
    r[..., 1, 2] = sz * sy * cx - cz * sx
    r[..., 2, 0] = -sy
    r[..., 2, 1] = cy * sx
    r[..., 2, 2] = cy * cx
    return r


def rotations_from_quaternions(q) -> np.ndarray:
    """Batched ``rotation_from_quaternion`` over a (k, 4) array."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
    norm = np.sqrt((q * q).sum(axis=1))
    if not (np.isfinite(norm).all() and (norm > 0).all()):
        raise ValueError("quaternions must be finite and non-zero")
    w, x, y, z = (q / norm[:, None]).T
    r = np.empty((len(q), 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r
