"""Synthetic stand-in for a hand-annotated fractal corpus.

No human labels ship with the package.  For demos, benchmarks and tests a
naive-sampled system is labelled *good* when its Chaos Game stays bounded and
the normalised cloud keeps enough variance along every axis (optionally also
along every principal direction); everything else is *bad*.
"""

from __future__ import annotations

import numpy as np

from . import chaos
from .features import FeatureMatrix, extract
from .filters import DEFAULT_VARIANCE_THRESHOLD
from .ifs import IfsSystem, sample_naive, sample_system_size

# Class counts of the reference annotation effort: 244 good, 1779 bad.
REFERENCE_GOOD = 244
REFERENCE_BAD = 1779
# Smaller corpus with the same ~12% good share, quick enough to build on demand.
QUICK_GOOD = 60
QUICK_BAD = 440


def geometric_label(system: IfsSystem, rng: np.random.Generator, points: int = 2000,
                    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
                    eigen_threshold: float | None = None) -> int:
    try:
        cloud = chaos.chaos_game(system, points, chaos.DEFAULT_BURN_IN, rng)
    except chaos.DivergenceError:
        return 0
    pts = chaos.normalize_cloud(cloud)
    if not np.all(chaos.axis_variances(pts) > variance_threshold):
        return 0
    if eigen_threshold is None:
        return 1
    return int(chaos.covariance_eigenvalues(pts)[-1] > eigen_threshold)


def synthetic_annotations(rng: np.random.Generator, n_good: int = REFERENCE_GOOD,
                          n_bad: int = REFERENCE_BAD, points: int = 2000,
                          max_draws: int = 2_000_000):
    """Label naive systems until ``n_good`` good and ``n_bad`` bad are collected.

    Returns ``(systems, labels)`` in draw order.  Surplus bad draws are skipped.
    """
    systems, labels = [], []
    good = bad = 0
    for _ in range(max_draws):
        if good >= n_good and bad >= n_bad:
            break
        system = sample_naive(rng, sample_system_size(rng))
        label = geometric_label(system, rng, points)
        if label and good < n_good:
            good += 1
        elif not label and bad < n_bad:
            bad += 1
        else:
            continue
        systems.append(system)
        labels.append(label)
    else:
        raise RuntimeError(f"collected {good} good / {bad} bad after {max_draws} draws")
    return systems, np.array(labels, dtype=np.int64)


def annotated_matrix(rng: np.random.Generator, n_good: int = REFERENCE_GOOD,
                     n_bad: int = REFERENCE_BAD, points: int = 2000) -> FeatureMatrix:
    systems, labels = synthetic_annotations(rng, n_good, n_bad, points)
    return FeatureMatrix.from_vectors([extract(s) for s in systems], labels)
