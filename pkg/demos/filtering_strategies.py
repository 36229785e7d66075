"""How often does each strategy accept a candidate, and what does it cost?

Run with ``python3 demos/filtering_strategies.py``.  Takes about 10 s.
"""

import numpy as np

from fractalforge import chaos, filters
from fractalforge.bench import emit_report, run_benchmark
from fractalforge.filters import FilterConfig, Strategy
from fractalforge.ifs import sample_naive, sample_svd_controlled, sample_system_size
from fractalforge.linalg import singular_values3

rng = np.random.default_rng(0)

# Naive draws: every entry of A and b uniform in [-1, 1).
system = sample_naive(rng, 4)
print("naive system, singular values per map:")
for a in system.a:
    print("  ", np.round(singular_values3(a), 3))

# Most naive maps expand somewhere, so the chaos game often blows up.
diverged = 0
for _ in range(500):
    try:
        chaos.chaos_game(sample_naive(rng, sample_system_size(rng)), 2000, 100, rng)
    except chaos.DivergenceError:
        diverged += 1
print(f"\n{diverged}/500 naive systems diverge")

# SVD-Control builds A = U diag(s) V^T with s in [0, 1): never expands.
s = sample_svd_controlled(rng, 4)
print("\nSVD-controlled largest singular values:",
      np.round([singular_values3(a)[0] for a in s.a], 3))

# TSF judges the parameters alone: every map needs sigma_max < 1 and sigma_min >= eps.
verdicts = [filters.tsf_filter(sample_naive(rng, sample_system_size(rng)), 0.2)
            for _ in range(20_000)]
reasons = {}
for v in verdicts:
    if not v.accepted:
        reasons[v.reason.value] = reasons.get(v.reason.value, 0) + 1
print("\nwhole-system TSF verdicts over 20 000 naive systems:", reasons)

# Redrawing only the failing matrix makes acceptance practical.
rec = filters.generate_valid(Strategy.TSF, rng)
print(f"one TSF class: {rec.rejections} rejected matrix draws, {rec.elapsed * 1e3:.1f} ms")

# Baseline: run the chaos game, then require per-axis variance > 0.05.
rec = filters.generate_valid(Strategy.BASELINE_VARIANCE, rng, config=FilterConfig(points=10_000))
print(f"one baseline class: {rec.rejections} rejections {rec.reasons}, {rec.elapsed:.2f} s")

# Small benchmark: 20 classes, 2 runs per strategy.
report = run_benchmark(classes_per_run=20, n_runs=2, rng_seed=1)
print()
print(emit_report(report, "markdown"))
