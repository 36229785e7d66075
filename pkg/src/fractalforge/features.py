"""Per-system statistical features and correlation-pruned feature selection."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .ifs import IfsSystem
from .linalg import _det3, singular_values3

log = logging.getLogger(__name__)

PER_MAP = ("sigma1", "sigma2", "sigma3", "abs_det", "kappa", "sig12_diff", "sig13_diff")

# Canonical column order for CSV files and model schemas.
FEATURE_COLUMNS = (
    "n",
    "sum_abs_det",
    "mean_abs_det",
    "mean_abs_det_over_n",
    "mean_kappa",
    "mean_sigma3",
    "mean_sig12_diff",
    "mean_sig13_diff",
    "mean_sigma1",
    "mean_sigma2",
    "sum_sigma1",
    "sum_sigma2",
    "sum_sigma3",
    "sum_kappa",
    "sum_sig12_diff",
    "sum_sig13_diff",
    "kappa_excluded",
)

# Used for mean/sum kappa when every map in a system is singular.
KAPPA_SENTINEL = 1e12
_SINGULAR_RTOL = 1e-12

LABELS = ("bad", "good")


@numba.njit(cache=True)
def _map_stats(a):
    n = a.shape[0]
    out = np.empty((n, 7))
    for i in range(n):
        s = singular_values3(a[i])
        out[i, 0] = s[0]
        out[i, 1] = s[1]
        out[i, 2] = s[2]
        out[i, 3] = abs(_det3(a[i]))
        if s[2] > _SINGULAR_RTOL * s[0] and s[2] > 0.0:
            out[i, 4] = s[0] / s[2]
        else:
            out[i, 4] = np.inf
        out[i, 5] = s[0] - s[1]
        out[i, 6] = s[0] - s[2]
    return out


@dataclass
class FeatureVector:
    n: int
    per_map: np.ndarray  # (n, 7), columns in PER_MAP order
    values: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_array(self, columns=FEATURE_COLUMNS) -> np.ndarray:
        return np.array([self.values[c] for c in columns], dtype=np.float64)


def extract(system: IfsSystem) -> FeatureVector:
    """Singular-value statistics of every map, aggregated by mean and sum.

    Singular maps get kappa = inf; they are left out of the kappa aggregates
    and counted in ``kappa_excluded``.
    """
    per_map = _map_stats(np.ascontiguousarray(system.matrices))
    n = per_map.shape[0]
    values = {"n": float(n)}
    for j, q in enumerate(PER_MAP):
        col = per_map[:, j]
        if q == "kappa":
            finite = col[np.isfinite(col)]
            values["kappa_excluded"] = float(n - finite.size)
            if finite.size:
                values["sum_kappa"] = float(finite.sum())
                values["mean_kappa"] = float(finite.mean())
            else:
                values["sum_kappa"] = values["mean_kappa"] = KAPPA_SENTINEL
            continue
        values[f"sum_{q}"] = float(col.sum())
        values[f"mean_{q}"] = float(col.mean())
    values["mean_abs_det_over_n"] = values["mean_abs_det"] / n
    values = {c: values[c] for c in FEATURE_COLUMNS}
    return FeatureVector(n, per_map, values)


@dataclass
class FeatureMatrix:
    columns: list[str]
    x: np.ndarray  # (rows, len(columns))
    labels: np.ndarray | None = None  # 1 = good, 0 = bad
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = list(self.columns)
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1, len(self.columns))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.x.shape[0],):
                raise ValueError("labels must match the number of rows")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be 0 (bad) or 1 (good)")

    def __len__(self) -> int:
        return self.x.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.columns.index(name)]

    def select(self, columns) -> "FeatureMatrix":
        idx = [self.columns.index(c) for c in columns]
        return FeatureMatrix(list(columns), self.x[:, idx], self.labels)

    @classmethod
    def from_vectors(cls, vectors, labels=None, columns=FEATURE_COLUMNS) -> "FeatureMatrix":
        x = np.array([v.as_array(columns) for v in vectors]).reshape(-1, len(columns))
        return cls(list(columns), x, None if labels is None else np.asarray(labels))


def parse_label(text: str) -> int:
    t = text.strip().lower()
    if t in ("good", "1", "true"):
        return 1
    if t in ("bad", "0", "false"):
        return 0
    raise ValueError(f"unknown label {text!r} (expected good|bad)")


def format_csv(m: FeatureMatrix, fh) -> None:
    """Header of column names (plus ``label``), one row per system, exact floats."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(m.columns) + (["label"] if m.labels is not None else []))
    for i, row in enumerate(m.x):
        cells = [repr(float(v)) for v in row]
        if m.labels is not None:
            cells.append(LABELS[m.labels[i]])
        w.writerow(cells)


def write_csv(m: FeatureMatrix, path) -> None:
    with Path(path).open("w", newline="") as fh:
        format_csv(m, fh)


def read_csv(path) -> FeatureMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty feature file")
    header = [h.strip() for h in rows[0]]
    has_label = "label" in header
    feat_cols = [h for h in header if h != "label"]
    x, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        rec = dict(zip(header, row))
        try:
            x.append([float(rec[c]) for c in feat_cols])
            if has_label:
                labels.append(parse_label(rec["label"]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return FeatureMatrix(feat_cols, np.array(x).reshape(-1, len(feat_cols)),
                         np.array(labels) if has_label else None)


def correlation_matrix(m: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Pearson correlations between columns.

    Constant columns correlate 0 with everything else (diagonal stays 1) and
    are logged.
    """
    x = m.x if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least two rows for correlations")
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    constant = norms == 0.0
    if constant.any():
        names = (np.array(m.columns)[constant].tolist() if isinstance(m, FeatureMatrix)
                 else np.flatnonzero(constant).tolist())
        log.warning("zero-variance columns get correlation 0: %s", names)
    safe = np.where(constant, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_prune(ranked, corr: np.ndarray, columns, max_corr: float = 0.8, k: int = 5) -> list:
    """Greedy pick from the top of ``ranked``, skipping anything correlated
    above ``max_corr`` (in absolute value) with an already picked feature."""
    if k < 1:
        raise ValueError("k must be >= 1")
    index = {c: i for i, c in enumerate(columns)}
    picked = []
    for name in ranked:
        i = index[name]
        if all(abs(corr[i, index[p]]) <= max_corr for p in picked):
            picked.append(name)
            if len(picked) == k:
                break
    if len(picked) < k:
        log.warning("correlation pruning kept only %d of %d requested features", len(picked), k)
    return picked


def extract_matrix(systems, labels=None, columns=FEATURE_COLUMNS) -> FeatureMatrix:
    return FeatureMatrix.from_vectors([extract(s) for s in systems], labels, columns)


def is_finite_row(v: FeatureVector) -> bool:
    return all(math.isfinite(x) for x in v.values.values())
