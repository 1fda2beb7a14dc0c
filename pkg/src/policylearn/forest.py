"""Honest subsampled regression forest.

Each tree is grown on a random subsample drawn without replacement. With
honesty enabled the subsample is split in half: the first half determines
the tree structure, the second half supplies the leaf means used for
prediction. Predictions average per-tree leaf means. Per-tree seeds are
derived from the master seed, so results do not depend on fitting order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.tree import DecisionTreeRegressor

from .validation import as_float_matrix, as_float_vector


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters shared by every forest in a pipeline run."""

    num_trees: int = 200
    subsample_fraction: float = 0.5
    features_per_split: int | None = None  # None -> ceil(sqrt(p))
    min_leaf: int = 5
    honest: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class _FittedTree:
    """One grown tree plus the leaf values used at prediction time."""

    __slots__ = ("tree", "leaf_values", "structure_idx", "estimate_idx")

    def __init__(self, tree, leaf_values, structure_idx, estimate_idx):
        self.tree = tree
        self.leaf_values = leaf_values
        self.structure_idx = structure_idx
        self.estimate_idx = estimate_idx


class RegressionForest(BaseEstimator, RegressorMixin):
    """Subsampled regression forest with optional honest leaf estimates.

    Parameters
    ----------
    num_trees : int
        Number of trees to grow.
    subsample_fraction : float
        Fraction of the sample drawn (without replacement) per tree.
    features_per_split : int or None
        Features considered at each split; ``None`` uses ``ceil(sqrt(p))``.
    min_leaf : int
        Minimum observations per structural leaf.
    honest : bool
        If True, leaf predictions are means of the held-out estimation
        half of each tree's subsample rather than the structure half.
    seed : int
        Master seed; per-tree seeds are spawned deterministically from it.
    n_jobs : int
        Workers used to grow trees. Results are identical for any value.
    """

    def __init__(self, num_trees=200, subsample_fraction=0.5,
                 features_per_split=None, min_leaf=5, honest=True,
                 seed=0, n_jobs=1):
        self.num_trees = num_trees
        self.subsample_fraction = subsample_fraction
        self.features_per_split = features_per_split
        self.min_leaf = min_leaf
        self.honest = honest
        self.seed = seed
        self.n_jobs = n_jobs

    @classmethod
    def from_params(cls, params: ForestParams, seed: int = 0, n_jobs: int = 1):
        return cls(seed=seed, n_jobs=n_jobs, **params.to_dict())

    def fit(self, X, y):
        X = as_float_matrix(X, "X")
        y = as_float_vector(y, "y")
        n, p = X.shape
        if y.shape[0] != n:
            raise ValueError("X and y disagree on the number of rows")
        if n < 1:
            raise ValueError("cannot fit a forest on an empty sample")
        if self.num_trees < 1:
            raise ValueError("num_trees must be positive")
        max_features = self.features_per_split
        if max_features is None:
            max_features = max(1, math.ceil(math.sqrt(p))) if p else 1
        root = (self.seed if isinstance(self.seed, np.random.SeedSequence)
                else np.random.SeedSequence(self.seed))
        seeds = root.spawn(self.num_trees)

        def grow(ss):
            return self._grow_tree(X, y, ss, max_features)

        if self.n_jobs and self.n_jobs != 1:
            trees = Parallel(n_jobs=self.n_jobs, backend="threading")(
                delayed(grow)(ss) for ss in seeds)
        else:
            trees = [grow(ss) for ss in seeds]
        self.trees_ = trees
        self.n_features_in_ = p
        return self

    def _grow_tree(self, X, y, seed_seq, max_features):
        rng = np.random.default_rng(seed_seq)
        n = X.shape[0]
        m = int(round(self.subsample_fraction * n))
        m = min(n, max(2, m))
        idx = rng.choice(n, size=m, replace=False)
        if self.honest and m >= 4:
            half = m // 2
            structure, estimate = idx[:half], idx[half:]
        else:
            structure, estimate = idx, idx
        tree = DecisionTreeRegressor(
            max_features=min(max_features, max(1, X.shape[1])) if X.shape[1] else None,
            min_samples_leaf=min(self.min_leaf, max(1, structure.size)),
            random_state=int(rng.integers(0, 2**31 - 1)),
        )
        tree.fit(X[structure], y[structure])
        # structure-half means; overwritten by estimation-half means where possible
        leaf_values = tree.tree_.value[:, 0, 0].astype(np.float64).copy()
        if self.honest and estimate is not structure:
            leaves = tree.apply(X[estimate])
            sums = np.zeros(leaf_values.shape[0])
            counts = np.zeros(leaf_values.shape[0])
            np.add.at(sums, leaves, y[estimate])
            np.add.at(counts, leaves, 1.0)
            filled = counts > 0
            leaf_values[filled] = sums[filled] / counts[filled]
        return _FittedTree(tree, leaf_values,
                           np.sort(structure), np.sort(estimate))

    def predict(self, X):
        if not hasattr(self, "trees_"):
            raise ValueError("forest is not fitted")
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, forest was fit with {self.n_features_in_}")
        out = np.zeros(X.shape[0], dtype=np.float64)
        for fitted in self.trees_:
            out += fitted.leaf_values[fitted.tree.apply(X)]
        out /= len(self.trees_)
        return out
