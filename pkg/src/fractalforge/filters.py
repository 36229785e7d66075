"""Filtering strategies and the rejection-sampling driver.

Pre-generation strategies (Tsf, StatThreshold, RfFilter) judge a candidate
from its parameters alone.  Post-hoc strategies (BaselineVariance, PcaNaive,
PcaSvd) have to run the Chaos Game before they can judge.  SvdControl builds
contractive maps directly and never rejects.
"""

from __future__ import annotations

import enum
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numba
import numpy as np

from . import chaos
from .classifier import ForestModel, load_model, predict_proba
from .features import extract
from .ifs import (
    IfsSystem,
    Provenance,
    RotationMode,
    sample_naive,
    sample_svd_controlled,
    sample_system_size,
)
from .linalg import singular_values3

DEFAULT_VARIANCE_THRESHOLD = 0.05
DEFAULT_EPSILON = 0.2
DEFAULT_STAT_BOUNDS = (0.0276, 0.26)
DEFAULT_TRIM = 0.05
DEFAULT_EIGEN_THRESHOLD = 0.05
DEFAULT_PROBA_THRESHOLD = 0.5
DEFAULT_MAX_ATTEMPTS = 1_000_000

_TSF_BLOCK = 64


class Reason(str, enum.Enum):
    PASS = "pass"
    VARIANCE_COLLAPSE = "variance_collapse"
    STAGE1_NOT_CONTRACTIVE = "stage1_not_contractive"
    STAGE2_COLLAPSE = "stage2_collapse"
    STAT_OUT_OF_RANGE = "stat_out_of_range"
    PCA_COLLAPSE = "pca_collapse"
    RF_REJECTED = "rf_rejected"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reason: Reason

    def __post_init__(self):
        if self.accepted != (self.reason is Reason.PASS):
            raise ValueError("accepted must coincide with reason == PASS")

    def __bool__(self) -> bool:
        return self.accepted


PASS = FilterVerdict(True, Reason.PASS)


def _reject(reason: Reason) -> FilterVerdict:
    return FilterVerdict(False, reason)


class Strategy(str, enum.Enum):
    BASELINE_VARIANCE = "baseline"
    SVD_CONTROL = "svd"
    STAT_THRESHOLD = "stat"
    PCA_NAIVE = "pca_naive"
    PCA_SVD = "pca_svd"
    RF_FILTER = "rf"
    TSF = "tsf"

    @classmethod
    def parse(cls, text) -> "Strategy":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "baselinevariance": "baseline", "baseline_variance": "baseline", "naive": "baseline",
            "svdcontrol": "svd", "svd_control": "svd",
            "statthreshold": "stat", "stat_threshold": "stat",
            "pcanaive": "pca_naive", "pcasvd": "pca_svd",
            "rffilter": "rf", "rf_filter": "rf",
        }
        return cls(aliases.get(key, key))


class AttemptsExhausted(RuntimeError):
    def __init__(self, strategy, attempts: int):
        super().__init__(f"{Strategy(strategy).value}: no valid system after {attempts} rejections")
        self.strategy = strategy
        self.attempts = attempts


@dataclass
class AttemptLimits:
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class GenerationRecord:
    system: IfsSystem
    rejections: int
    elapsed: float  # seconds, wall clock
    reasons: dict = field(default_factory=dict)  # Reason value -> count
    strategy: Strategy | None = None


# --------------------------------------------------------------------------
# individual filters


def variance_filter(cloud, threshold: float = DEFAULT_VARIANCE_THRESHOLD,
                    normalize: bool = True) -> FilterVerdict:
    """Pass iff every per-axis variance is strictly above ``threshold``.

    With ``normalize`` the cloud is centred and scaled to max |coord| = 1
    first, which makes the threshold scale free.
    """
    pts = chaos.normalize_cloud(cloud) if normalize else cloud
    var = chaos.axis_variances(pts)
    if not np.all(var > threshold):  # also catches NaN
        return _reject(Reason.VARIANCE_COLLAPSE)
    return PASS


def pca_variance_filter(cloud, eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD,
                        normalize: bool = True) -> FilterVerdict:
    pts = chaos.normalize_cloud(cloud) if normalize else cloud
    ev = chaos.covariance_eigenvalues(pts)
    if not ev[-1] > eigen_threshold:
        return _reject(Reason.PCA_COLLAPSE)
    return PASS


@numba.njit(cache=True)
def _tsf_verdict(a, epsilon):
    # 0 pass, 1 stage-1 failure, 2 stage-2 failure
    n = a.shape[0]
    sig = np.empty((n, 3))
    for i in range(n):
        sig[i] = singular_values3(a[i])
    for i in range(n):
        if not sig[i, 0] < 1.0:
            return 1
    for i in range(n):
        if sig[i, 2] < epsilon:
            return 2
    return 0


def tsf_filter(system: IfsSystem, epsilon: float = DEFAULT_EPSILON) -> FilterVerdict:
    """Two-stage parameter check: every map needs sigma_max < 1, then
    sigma_min >= epsilon.  Translations are ignored."""
    code = _tsf_verdict(np.ascontiguousarray(system.matrices), float(epsilon))
    if code == 1:
        return _reject(Reason.STAGE1_NOT_CONTRACTIVE)
    if code == 2:
        return _reject(Reason.STAGE2_COLLAPSE)
    return PASS


@numba.njit(cache=True)
def _first_passing_map(block, epsilon):
    # block: (k, 9) raw U(-1, 1) draws.  Returns (index or -1, #stage1, #stage2)
    s1 = 0
    s2 = 0
    a = np.empty((3, 3))
    for j in range(block.shape[0]):
        for r in range(3):
            for c in range(3):
                a[r, c] = block[j, 3 * r + c]
        s = singular_values3(a)
        if not s[0] < 1.0:
            s1 += 1
        elif s[2] < epsilon:
            s2 += 1
        else:
            return j, s1, s2
    return -1, s1, s2


@dataclass
class StatFilterConfig:
    lower: float = DEFAULT_STAT_BOUNDS[0]
    upper: float = DEFAULT_STAT_BOUNDS[1]
    # N -> (lower, upper) for Sum-of-|det|; empty disables the per-N check
    per_n_bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"stat bounds must satisfy lower < upper, got {self.lower}, {self.upper}")
        table = {}
        for k, v in dict(self.per_n_bounds).items():
            lo, hi = (float(x) for x in v)
            if not lo < hi:
                raise ValueError(f"per-N bounds for N={k} must satisfy lower < upper")
            table[int(k)] = (lo, hi)
        self.per_n_bounds = table


def statistical_threshold_filter(system: IfsSystem, config: StatFilterConfig | None = None,
                                 features=None) -> FilterVerdict:
    config = config or StatFilterConfig()
    fv = features if features is not None else extract(system)
    if not config.lower < fv["mean_abs_det"] < config.upper:
        return _reject(Reason.STAT_OUT_OF_RANGE)
    bounds = config.per_n_bounds.get(system.n)
    if bounds is not None and not bounds[0] < fv["sum_abs_det"] < bounds[1]:
        return _reject(Reason.STAT_OUT_OF_RANGE)
    return PASS


def percentile_bounds(values, trim: float = DEFAULT_TRIM) -> tuple[float, float]:
    """(trim, 1 - trim) quantiles with linear interpolation between order stats."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("percentile_bounds needs values")
    if v.size < 2:
        raise ValueError("percentile_bounds needs at least two values")
    if not 0.0 < trim < 0.5:
        raise ValueError("trim must be in (0, 0.5)")
    lo, hi = np.quantile(v, [trim, 1.0 - trim], method="linear")
    return float(lo), float(hi)


def per_n_bounds_from(systems, trim: float = DEFAULT_TRIM) -> dict:
    """Per-N Sum-of-|det| interquantile table from a set of (good) systems."""
    by_n: dict[int, list] = {}
    for s in systems:
        by_n.setdefault(s.n, []).append(extract(s)["sum_abs_det"])
    return {n: percentile_bounds(v, trim) for n, v in sorted(by_n.items()) if len(v) >= 2}


def rf_filter(system: IfsSystem, model: ForestModel,
              proba_threshold: float = DEFAULT_PROBA_THRESHOLD, features=None) -> FilterVerdict:
    fv = features if features is not None else extract(system)
    if not predict_proba(model, fv) > proba_threshold:
        return _reject(Reason.RF_REJECTED)
    return PASS


# --------------------------------------------------------------------------
# configuration


@dataclass
class FilterConfig:
    strategy: Strategy = Strategy.TSF
    epsilon: float = DEFAULT_EPSILON
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    normalize_cloud: bool = True
    eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD
    stat_lower: float = DEFAULT_STAT_BOUNDS[0]
    stat_upper: float = DEFAULT_STAT_BOUNDS[1]
    per_n_bounds: dict = field(default_factory=dict)
    rf_model_path: str | None = None
    proba_threshold: float = DEFAULT_PROBA_THRESHOLD
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    points: int = chaos.DEFAULT_POINTS
    burn_in: int = chaos.DEFAULT_BURN_IN
    rotation_mode: RotationMode = RotationMode.EULER
    # "map": redraw only the failing matrix; "system": redraw the whole IFS
    tsf_resample: str = "map"

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        self.rotation_mode = RotationMode(self.rotation_mode)
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.variance_threshold > 0.0:
            raise ValueError("variance_threshold must be > 0")
        if not self.eigen_threshold > 0.0:
            raise ValueError("eigen_threshold must be > 0")
        if not 0.0 <= self.proba_threshold < 1.0:
            raise ValueError("proba_threshold must be in [0, 1)")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.points < 2 or self.burn_in < 0:
            raise ValueError("points must be >= 2 and burn_in >= 0")
        if self.tsf_resample not in ("map", "system"):
            raise ValueError("tsf_resample must be 'map' or 'system'")
        self.stat = StatFilterConfig(self.stat_lower, self.stat_upper, self.per_n_bounds)
        self.per_n_bounds = self.stat.per_n_bounds

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown filter config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["rotation_mode"] = self.rotation_mode.value
        d["per_n_bounds"] = {str(k): list(v) for k, v in self.per_n_bounds.items()}
        return d

    def replace(self, **changes) -> "FilterConfig":
        d = self.to_dict()
        d.update(changes)
        return FilterConfig.from_dict(d)


def load_filter_config(path) -> FilterConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return FilterConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# driver


def _sample_tsf_by_map(rng, config: FilterConfig, tally: Counter, limit: int) -> IfsSystem:
    n = sample_system_size(rng)
    a = np.empty((n, 3, 3))
    rejected = 0
    for i in range(n):
        while True:
            block = rng.uniform(-1.0, 1.0, size=(_TSF_BLOCK, 9))
            j, s1, s2 = _first_passing_map(block, config.epsilon)
            tally[Reason.STAGE1_NOT_CONTRACTIVE.value] += s1
            tally[Reason.STAGE2_COLLAPSE.value] += s2
            rejected += s1 + s2
            if rejected >= limit:
                # draws come in blocks; the limit-th rejection is where we stop counting
                raise AttemptsExhausted(Strategy.TSF, limit)
            if j >= 0:
                a[i] = block[j].reshape(3, 3)
                break
    b = rng.uniform(-1.0, 1.0, size=(n, 3))
    return IfsSystem(a, b, provenance=Provenance.NAIVE)


def judge(strategy, system: IfsSystem, rng, config: FilterConfig | None = None,
          model: ForestModel | None = None) -> FilterVerdict:
    """Verdict of one candidate under ``strategy``.

    Cloud-based strategies run the chaos game first (divergence is a
    rejection); TSF, statistical and RF strategies look at parameters only.
    """
    strategy = Strategy.parse(strategy)
    config = config or FilterConfig(strategy=strategy)
    if strategy is Strategy.TSF:
        return tsf_filter(system, config.epsilon)
    if strategy is Strategy.STAT_THRESHOLD:
        return statistical_threshold_filter(system, config.stat)
    if strategy is Strategy.RF_FILTER:
        return rf_filter(system, model, config.proba_threshold)
    try:
        cloud = chaos.chaos_game(system, config.points, config.burn_in, rng)
    except chaos.DivergenceError:
        return _reject(Reason.DIVERGED)
    if strategy is Strategy.BASELINE_VARIANCE:
        return variance_filter(cloud, config.variance_threshold, config.normalize_cloud)
    return pca_variance_filter(cloud, config.eigen_threshold, config.normalize_cloud)


def generate_valid(strategy, rng: np.random.Generator, limits: AttemptLimits | None = None,
                   config: FilterConfig | None = None,
                   model: ForestModel | None = None) -> GenerationRecord:
    """Draw candidates until one is accepted.

    ``rejections`` counts rejected candidates: whole systems, except for TSF in
    the default per-map mode where every rejected matrix draw counts once.
    """
    strategy = Strategy.parse(strategy)
    config = config or FilterConfig(strategy=strategy)
    limit = (limits or AttemptLimits(config.max_attempts)).max_attempts
    if strategy is Strategy.RF_FILTER and model is None:
        if config.rf_model_path is None:
            raise ValueError("the rf strategy needs a model (pass model= or rf_model_path)")
        model = load_model(config.rf_model_path)

    tally: Counter = Counter()
    t0 = time.perf_counter()

    if strategy is Strategy.SVD_CONTROL:
        system = sample_svd_controlled(rng, sample_system_size(rng), config.rotation_mode)
        return GenerationRecord(system, 0, time.perf_counter() - t0, {}, strategy)

    if strategy is Strategy.TSF and config.tsf_resample == "map":
        system = _sample_tsf_by_map(rng, config, tally, limit)
        rejections = sum(tally.values())
        return GenerationRecord(system, rejections, time.perf_counter() - t0, dict(tally), strategy)

    rejections = 0
    while True:
        n = sample_system_size(rng)
        if strategy is Strategy.PCA_SVD:
            system = sample_svd_controlled(rng, n, config.rotation_mode)
        else:
            system = sample_naive(rng, n)
        verdict = judge(strategy, system, rng, config, model)
        if verdict.accepted:
            return GenerationRecord(system, rejections, time.perf_counter() - t0,
                                    dict(tally), strategy)
        tally[verdict.reason.value] += 1
        rejections += 1
        if rejections >= limit:
            raise AttemptsExhausted(strategy, rejections)
