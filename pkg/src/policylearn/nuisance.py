"""Cluster-coherent cross-fitting of outcome and propensity models.

Every prediction for observation i comes from models trained without
fold k(i), and folds never split a cluster, so perturbing one outcome
can never move its own row of the fitted nuisance matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .forest import ForestParams, RegressionForest


@dataclass(frozen=True)
class FoldAssignment:
    """Fold id per observation; observations in one cluster share a fold."""

    folds: np.ndarray
    n_folds: int

    def __post_init__(self):
        object.__setattr__(self, "folds", np.asarray(self.folds, dtype=np.int64))
        if self.folds.min() < 0 or self.folds.max() >= self.n_folds:
            raise ValueError("fold ids out of range")
        if np.unique(self.folds).size != self.n_folds:
            raise ValueError("every fold must be nonempty")


@dataclass(frozen=True)
class NuisanceFit:
    """Cross-fitted outcome means and assignment probabilities."""

    mu_hat: np.ndarray  # (n, D)
    e_hat: np.ndarray   # (n, D)
    learner_config: dict
    seed: int


def make_folds(clusters, n_folds: int, seed: int) -> FoldAssignment:
    """Deal whole clusters into ``n_folds`` balanced folds.

    Clusters are shuffled by a seeded generator and then dealt, each to
    the currently smallest fold (plain round-robin when all clusters have
    equal size). Deterministic given the seed.
    """
    clusters = np.asarray(clusters, dtype=np.int64)
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    uniq, counts = np.unique(clusters, return_counts=True)
    if uniq.size < n_folds:
        raise ValueError(
            f"need at least {n_folds} clusters, found {uniq.size}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(uniq.size)
    fold_of_cluster = np.empty(uniq.size, dtype=np.int64)
    load = np.zeros(n_folds, dtype=np.int64)
    for c in order:
        k = int(np.argmin(load))  # ties resolve to the lowest fold id
        fold_of_cluster[c] = k
        load[k] += counts[c]
    folds = fold_of_cluster[np.searchsorted(uniq, clusters)]
    return FoldAssignment(folds=folds, n_folds=n_folds)


def forest_fit(X, y, params: ForestParams, seed: int,
               n_jobs: int = 1) -> RegressionForest:
    """Fit one honest regression forest. Thin wrapper kept for symmetry."""
    return RegressionForest.from_params(params, seed=seed, n_jobs=n_jobs).fit(X, y)


def fit_outcome_models(ds: Dataset, folds: FoldAssignment,
                       params: ForestParams = ForestParams(), seed: int = 0,
                       n_jobs: int = 1) -> np.ndarray:
    """Cross-fitted outcome means per arm.

    Entry (i, a) is the prediction for row i from a forest fit on
    observations outside fold k(i) that received arm a.
    """
    n, D = ds.n, ds.d_arms
    mu = np.empty((n, D), dtype=np.float64)
    children = np.random.SeedSequence([int(seed), 0]).spawn(folds.n_folds * D)
    for k in range(folds.n_folds):
        holdout = folds.folds == k
        train = ~holdout
        for a in range(D):
            rows = train & (ds.actions == a)
            if not rows.any():
                raise ValueError(
                    f"no arm-{a} observations outside fold {k}; "
                    "cannot cross-fit the outcome model")
            forest = RegressionForest.from_params(
                params, seed=children[k * D + a], n_jobs=n_jobs)
            forest.fit(ds.features[rows], ds.outcomes[rows])
            mu[holdout, a] = forest.predict(ds.features[holdout])
    return mu


def _clip_rows_to_simplex(rows: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Rescale each row onto {p : sum p = 1, lo <= p_a <= hi}.

    Violated bounds are pinned one type per pass (lows first, since
    pinning them shrinks the free budget) and the free entries rescaled
    proportionally; each pass pins at least one entry, so the loop
    terminates within 2D passes.
    """
    out = rows.copy()
    D = rows.shape[1]
    for r in range(out.shape[0]):
        p = out[r].copy()
        at_lo = np.zeros(D, dtype=bool)
        at_hi = np.zeros(D, dtype=bool)
        for _ in range(2 * D + 2):
            free = ~(at_lo | at_hi)
            budget = 1.0 - lo * at_lo.sum() - hi * at_hi.sum()
            if not free.any():
                break
            s = p[free].sum()
            if s > 0:
                scaled = p[free] * (budget / s)
            else:
                scaled = np.full(int(free.sum()), budget / free.sum())
            q = p.copy()
            q[free] = scaled
            new_lo = free & (q < lo)
            if new_lo.any():
                at_lo |= new_lo
                continue
            new_hi = free & (q > hi)
            if new_hi.any():
                at_hi |= new_hi
                continue
            p = q
            break
        p[at_lo] = lo
        p[at_hi] = hi
        out[r] = p
    return out


def fit_propensities(ds: Dataset, folds: FoldAssignment,
                     params: ForestParams = ForestParams(), seed: int = 0,
                     clip: float = 0.01, n_jobs: int = 1) -> np.ndarray:
    """Cross-fitted assignment probabilities, clipped away from 0 and 1.

    One-vs-rest forests produce per-arm scores which are renormalized to
    sum to one and then projected onto [clip, 1 - clip]. When the dataset
    carries known propensities, those are returned unchanged.
    """
    if ds.propensities is not None:
        return ds.propensities.copy()
    if not 0.0 < clip < 0.5:
        raise ValueError("clip must lie in (0, 0.5)")
    n, D = ds.n, ds.d_arms
    if clip * D > 1.0:
        raise ValueError(f"clip={clip} infeasible for {D} arms")
    counts = np.bincount(ds.actions, minlength=D)
    for a in np.flatnonzero(counts == 0):
        raise ValueError(f"arm {int(a)} has zero observations")
    raw = np.empty((n, D), dtype=np.float64)
    children = np.random.SeedSequence([int(seed), 1]).spawn(folds.n_folds * D)
    for k in range(folds.n_folds):
        holdout = folds.folds == k
        train = ~holdout
        for a in range(D):
            y = (ds.actions == a).astype(np.float64)
            forest = RegressionForest.from_params(
                params, seed=children[k * D + a], n_jobs=n_jobs)
            forest.fit(ds.features[train], y[train])
            raw[holdout, a] = forest.predict(ds.features[holdout])
    raw = np.clip(raw, 0.0, None)
    sums = raw.sum(axis=1, keepdims=True)
    degenerate = sums[:, 0] <= 0
    raw[degenerate] = 1.0 / D
    sums[degenerate] = 1.0
    raw /= sums
    return _clip_rows_to_simplex(raw, clip, 1.0 - clip)


def fit_nuisance(ds: Dataset, folds: FoldAssignment | None = None,
                 params: ForestParams = ForestParams(), seed: int = 0,
                 clip: float = 0.01, n_folds: int = 10,
                 n_jobs: int = 1) -> NuisanceFit:
    """Cross-fit outcome means and propensities in one call."""
    if folds is None:
        folds = make_folds(ds.clusters, n_folds, seed)
    mu = fit_outcome_models(ds, folds, params, seed, n_jobs=n_jobs)
    e = fit_propensities(ds, folds, params, seed, clip=clip, n_jobs=n_jobs)
    return NuisanceFit(mu_hat=mu, e_hat=e,
                       learner_config=params.to_dict(), seed=int(seed))
