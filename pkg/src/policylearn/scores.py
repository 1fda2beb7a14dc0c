"""Doubly robust score matrices and policy reward estimation.

The score matrix gamma holds one unbiased value estimate per observation
and arm. Summing the entries a policy selects estimates that policy's
reward; with the augmented (outcome-model) form the estimate is
consistent when either the outcome model or the propensity model is
right.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .nuisance import NuisanceFit
from .validation import as_float_matrix


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-observation, per-arm value estimates."""

    gamma: np.ndarray  # (n, D)
    method: str        # "ipw" | "aipw"

    def __post_init__(self):
        g = as_float_matrix(self.gamma, "gamma")
        if not np.all(np.isfinite(g)):
            raise ValueError("score matrix contains non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if self.method not in ("ipw", "aipw"):
            raise ValueError("method must be 'ipw' or 'aipw'")

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def d_arms(self) -> int:
        return self.gamma.shape[1]

    def subset(self, idx) -> "ScoreMatrix":
        return ScoreMatrix(self.gamma[np.asarray(idx)], self.method)


@dataclass(frozen=True)
class RewardEstimate:
    """Point estimate of a policy's expected reward with a plug-in SE."""

    value: float
    std_error: float
    n: int
    method: str


@dataclass(frozen=True)
class GroupEffect:
    """Mean treatment contrast of one arm against the baseline in a group."""

    group: object
    arm: int
    estimate: float
    std_error: float
    n_group: int


def _mean_se(contrib: np.ndarray) -> tuple[float, float]:
    n = contrib.shape[0]
    value = float(contrib.mean())
    se = float(contrib.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return value, se


def aipw_scores(ds: Dataset, fit: NuisanceFit) -> ScoreMatrix:
    """Augmented inverse-propensity scores from a cross-fitted nuisance fit.

    Entry (i, a) equals
    ``mu_hat[i, a] + 1{A_i = a} * (Y_i - mu_hat[i, a]) / e_hat[i, a]``.
    """
    mu = as_float_matrix(fit.mu_hat, "mu_hat")
    e = as_float_matrix(fit.e_hat, "e_hat")
    if mu.shape != (ds.n, ds.d_arms) or e.shape != (ds.n, ds.d_arms):
        raise ValueError("nuisance matrices do not match the dataset shape")
    if np.any(e <= 0.0):
        raise ValueError("e_hat contains non-positive entries")
    gamma = mu.copy()
    rows = np.arange(ds.n)
    a_obs = ds.actions
    gamma[rows, a_obs] += (ds.outcomes - mu[rows, a_obs]) / e[rows, a_obs]
    return ScoreMatrix(gamma=gamma, method="aipw")


def ipw_scores(ds: Dataset, e_hat: np.ndarray | None = None) -> ScoreMatrix:
    """Pure inverse-propensity scores: row i is zero except at the observed arm."""
    e = ds.propensities if e_hat is None else as_float_matrix(e_hat, "e_hat")
    if e is None:
        raise ValueError("no propensities available; pass e_hat")
    if np.any(e <= 0.0):
        raise ValueError("propensities must be strictly positive")
    gamma = np.zeros((ds.n, ds.d_arms), dtype=np.float64)
    rows = np.arange(ds.n)
    gamma[rows, ds.actions] = ds.outcomes / e[rows, ds.actions]
    return ScoreMatrix(gamma=gamma, method="ipw")


def ipw_reward(ds: Dataset, policy, e_hat: np.ndarray | None = None,
               seed: int | None = None) -> RewardEstimate:
    """Inverse-propensity estimate of a policy's reward.

    Averages ``1{A_i = pi(X_i)} * Y_i / e_{A_i}(X_i)`` over the sample.
    """
    e = ds.propensities if e_hat is None else as_float_matrix(e_hat, "e_hat")
    if e is None:
        raise ValueError("no propensities available; pass e_hat")
    assignment = policy.assign(ds.features, seed=seed)
    rows = np.arange(ds.n)
    match = (ds.actions == assignment).astype(np.float64)
    contrib = match * ds.outcomes / e[rows, ds.actions]
    value, se = _mean_se(contrib)
    return RewardEstimate(value=value, std_error=se, n=ds.n, method="ipw")


def _check_assignment(scores: ScoreMatrix, assignment) -> np.ndarray:
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (scores.n,):
        raise ValueError(
            f"assignment has shape {assignment.shape}, expected ({scores.n},)")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= scores.d_arms):
        raise ValueError("assignment holds an arm id out of range")
    return assignment


def policy_reward(scores: ScoreMatrix, assignment) -> RewardEstimate:
    """Reward of a deterministic assignment: mean of the selected scores."""
    assignment = _check_assignment(scores, assignment)
    contrib = scores.gamma[np.arange(scores.n), assignment]
    value, se = _mean_se(contrib)
    return RewardEstimate(value=value, std_error=se, n=scores.n,
                          method=scores.method)


def stochastic_reward(scores: ScoreMatrix, weights) -> RewardEstimate:
    """Reward of a stochastic policy mixing arms with fixed weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (scores.d_arms,):
        raise ValueError(f"weights must have length {scores.d_arms}")
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    contrib = scores.gamma @ weights
    value, se = _mean_se(contrib)
    return RewardEstimate(value=value, std_error=se, n=scores.n,
                          method=scores.method)


def reward_difference(scores: ScoreMatrix, assign_a, assign_b) -> RewardEstimate:
    """Paired reward difference between two assignments (a minus b)."""
    assign_a = _check_assignment(scores, assign_a)
    assign_b = _check_assignment(scores, assign_b)
    rows = np.arange(scores.n)
    diff = scores.gamma[rows, assign_a] - scores.gamma[rows, assign_b]
    value, se = _mean_se(diff)
    return RewardEstimate(value=value, std_error=se, n=scores.n,
                          method=scores.method)


def group_effects(scores: ScoreMatrix, grouping, baseline_arm: int = 0
                  ) -> list[GroupEffect]:
    """Average treatment contrasts per group and non-baseline arm.

    Groups partition the sample; within each group the contrast for arm a
    is the mean (and SE) of ``gamma[:, a] - gamma[:, baseline_arm]``.
    """
    if not 0 <= baseline_arm < scores.d_arms:
        raise ValueError("baseline arm out of range")
    grouping = np.asarray(grouping)
    if grouping.shape != (scores.n,):
        raise ValueError("grouping must have one label per observation")
    out: list[GroupEffect] = []
    for label in np.unique(grouping):
        mask = grouping == label
        if not mask.any():
            raise ValueError(f"group {label!r} is empty")
        block = scores.gamma[mask]
        for arm in range(scores.d_arms):
            if arm == baseline_arm:
                continue
            contrib = block[:, arm] - block[:, baseline_arm]
            value, se = _mean_se(contrib)
            out.append(GroupEffect(group=label, arm=arm, estimate=value,
                                   std_error=se, n_group=int(mask.sum())))
    return out


def scores_to_csv(scores: ScoreMatrix, path, float_format: str = ".10g") -> None:
    """Write the score matrix as CSV with columns gamma_0..gamma_{D-1}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"gamma_{a}" for a in range(scores.d_arms)])
        for row in scores.gamma:
            writer.writerow([format(v, float_format) for v in row])
