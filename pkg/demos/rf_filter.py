"""Learning a filter from labelled systems with a random forest.

Run with ``python3 demos/rf_filter.py``.  Takes about 10 s.
"""

import numpy as np

from fractalforge import filters
from fractalforge.classifier import (
    ForestConfig,
    balanced_accuracy,
    permutation_importance,
    predict_proba_many,
    train,
)
from fractalforge.corpus import QUICK_BAD, QUICK_GOOD, annotated_matrix
from fractalforge.features import FeatureMatrix, correlation_matrix, correlation_prune

rng = np.random.default_rng(3)

# Labels come from geometry: bounded cloud with enough spread on every axis.
m = annotated_matrix(rng, QUICK_GOOD, QUICK_BAD)
print(f"{len(m)} systems, {m.labels.sum()} good, {len(m.columns)} features")

idx = rng.permutation(len(m))
test, fit = idx[:100], idx[100:]
sub = lambda rows: FeatureMatrix(m.columns, m.x[rows], m.labels[rows])  # noqa: E731

model = train(sub(fit), ForestConfig(n_trees=100), rng)
pred = (predict_proba_many(model, sub(test)) > 0.5).astype(int)
print(f"held-out balanced accuracy: {balanced_accuracy(m.labels[test], pred):.3f}")

# Which features matter?  Shuffle one column at a time and watch the score drop.
rep = permutation_importance(model, sub(test), 20, rng)
for c, mu, sd in list(zip(rep.columns, rep.mean, rep.std))[:8]:
    print(f"  {c:22s} {mu: .4f} +- {sd:.4f}")

# Keep the top features that are not near-duplicates of each other.
picked = correlation_prune(rep.columns, correlation_matrix(m), m.columns, 0.8, 5)
print("kept:", picked)

# The trained forest as a generation filter.
rec = filters.generate_valid("rf", rng, model=model)
print(f"RF filter accepted a {rec.system.n}-map system after {rec.rejections} rejections")
