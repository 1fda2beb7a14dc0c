"""Evaluation regression with cluster-robust inference.

Builds the treatment-group design for the two-wave evaluation model
(outcome on group dummies plus additive controls and a wave dummy), fits
it by OLS, and reports sandwich covariance clustered at the level
treatment was assigned (buildings in the motivating application).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .validation import as_float_matrix, as_float_vector

GROUP_NOTHING = "nothing"
GROUP_TREE = "policy_tree"
GROUP_RANDOM = "random"


def letter_label(arm: int) -> str:
    """Canonical group label for a randomly assigned treatment arm."""
    return GROUP_NOTHING if arm == 0 else f"letter{arm}"


@dataclass(frozen=True)
class DesignSpec:
    """Design choices for the evaluation regression.

    ``letters`` mode keeps one dummy per randomly assigned letter plus
    the policy-tree group; ``pooled`` mode collapses the random letters
    into a single dummy. ``base_group`` names the omitted category.
    Controls are feature names; a bare one-hot prefix (e.g. ``region``)
    expands to its indicator columns minus the first level.
    """

    w_mode: str = "letters"
    controls: tuple[str, ...] = ()
    wave_dummy: bool = True
    base_group: str = GROUP_NOTHING

    def __post_init__(self):
        if self.w_mode not in ("letters", "pooled"):
            raise ValueError("w_mode must be 'letters' or 'pooled'")


@dataclass(frozen=True)
class Design:
    """A realized regression design."""

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]
    clusters: np.ndarray


@dataclass(frozen=True)
class OlsFit:
    """OLS coefficients with a cluster-robust covariance."""

    coefficients: np.ndarray
    names: tuple[str, ...]
    vcov: np.ndarray
    residuals: np.ndarray
    n: int
    n_clusters: int
    df_adjust: str

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}") from None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def se(self, name: str) -> float:
        return float(math.sqrt(self.vcov[self.index(name), self.index(name)]))

    def pvalue(self, name: str) -> float:
        se = self.se(name)
        if se == 0.0:
            return 0.0 if self.coef(name) != 0.0 else 1.0
        z = abs(self.coef(name)) / se
        return math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class Contrast:
    estimate: float
    std_error: float

    @property
    def pvalue(self) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.estimate != 0.0 else 1.0
        z = abs(self.estimate) / self.std_error
        return math.erfc(z / math.sqrt(2.0))


_CANONICAL_GROUPS = ("letter1", "letter2", "letter3", GROUP_RANDOM,
                     GROUP_NOTHING, GROUP_TREE)


def _group_columns(groups: np.ndarray, random_flags: np.ndarray,
                   spec: DesignSpec) -> tuple[np.ndarray, list[str]]:
    groups = np.asarray(groups)
    if np.any(groups == ""):
        bad = int(np.flatnonzero(groups == "")[0])
        raise ValueError(f"row {bad} has no treatment-group label")
    if spec.w_mode == "pooled":
        pooled = np.asarray(groups, dtype=object).copy()
        is_letter = np.char.startswith(groups.astype(str), "letter")
        if np.any(is_letter & ~random_flags):
            bad = int(np.flatnonzero(is_letter & ~random_flags)[0])
            raise ValueError(
                f"row {bad}: letter group without random assignment cannot "
                "be pooled")
        pooled[is_letter] = GROUP_RANDOM
        groups = pooled.astype(str)
    present = [g for g in _CANONICAL_GROUPS if np.any(groups == g)]
    extra = sorted(set(groups) - set(present))
    present += extra
    if spec.base_group not in present:
        raise ValueError(
            f"base group {spec.base_group!r} absent from the data "
            f"(present: {present})")
    w_labels = [g for g in present if g != spec.base_group]
    if not w_labels:
        raise ValueError("all rows share one treatment group; no contrast")
    cols = np.column_stack([(groups == g).astype(np.float64) for g in w_labels])
    return cols, w_labels


def _control_columns(ds: Dataset, controls) -> tuple[list[np.ndarray], list[str]]:
    cols: list[np.ndarray] = []
    names: list[str] = []
    for c in controls:
        if c in ds.feature_names:
            cols.append(ds.feature(c))
            names.append(c)
            continue
        prefix = f"{c}="
        matching = sorted(f for f in ds.feature_names if f.startswith(prefix))
        if not matching:
            raise KeyError(f"unknown control {c!r}")
        for f in matching[1:]:  # first level is the reference
            cols.append(ds.feature(f))
            names.append(f)
    return cols, names


def build_design(ds: Dataset, groups, spec: DesignSpec,
                 random_flags=None) -> Design:
    """Design matrix for the evaluation regression.

    Columns: intercept, treatment-group dummies (base group omitted),
    additive controls, and a second-wave dummy when both waves appear.
    Raises when a column is constant or duplicated, naming the columns.
    """
    groups = np.asarray(groups).astype(str)
    if groups.shape[0] != ds.n:
        raise ValueError("groups must have one label per row")
    if random_flags is None:
        random_flags = np.zeros(ds.n, dtype=bool)
    random_flags = np.asarray(random_flags, dtype=bool)

    w_cols, w_names = _group_columns(groups, random_flags, spec)
    cols = [np.ones(ds.n)] + [w_cols[:, k] for k in range(w_cols.shape[1])]
    names = ["intercept"] + list(w_names)
    ctrl_cols, ctrl_names = _control_columns(ds, spec.controls)
    cols += ctrl_cols
    names += ctrl_names
    if spec.wave_dummy and ds.wave is not None and np.unique(ds.wave).size > 1:
        cols.append((ds.wave == 2).astype(np.float64))
        names.append("wave2")

    X = np.column_stack(cols)
    for k in range(1, X.shape[1]):
        if np.all(X[:, k] == X[0, k]):
            raise ValueError(f"column {names[k]!r} is constant; "
                             "it collides with the intercept")
    for i in range(X.shape[1]):
        for j in range(i + 1, X.shape[1]):
            if np.array_equal(X[:, i], X[:, j]):
                raise ValueError(
                    f"columns {names[i]!r} and {names[j]!r} are identical")
    return Design(y=ds.outcomes.copy(), X=X, names=tuple(names),
                  clusters=ds.clusters.copy())


def _dependent_columns(X: np.ndarray, names) -> list[str]:
    bad = []
    rank = 0
    for j in range(X.shape[1]):
        r = np.linalg.matrix_rank(X[:, :j + 1])
        if r == rank:
            bad.append(names[j])
        rank = r
    return bad


def ols_cluster(y, X, clusters, names=None, df_adjust: str = "CR1") -> OlsFit:
    """OLS with a clustered sandwich covariance.

    The meat sums per-cluster score outer products; CR1 rescales by
    ``(G/(G-1)) * ((n-1)/(n-k))``. With singleton clusters CR1 equals the
    HC1 heteroskedasticity-robust covariance exactly.
    """
    y = as_float_vector(y, "y")
    X = as_float_matrix(X, "X")
    clusters = np.asarray(clusters, dtype=np.int64)
    n, k = X.shape
    if names is None:
        names = tuple(f"x{j}" for j in range(k))
    names = tuple(names)
    if df_adjust not in ("CR0", "CR1"):
        raise ValueError("df_adjust must be 'CR0' or 'CR1'")
    if np.linalg.matrix_rank(X) < k:
        raise np.linalg.LinAlgError(
            f"design is rank deficient; dependent columns: "
            f"{_dependent_columns(X, names)}")

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    _, cluster_idx = np.unique(clusters, return_inverse=True)
    G = int(cluster_idx.max()) + 1
    scores = np.zeros((G, k))
    np.add.at(scores, cluster_idx, X * resid[:, None])
    meat = scores.T @ scores
    vcov = bread @ meat @ bread
    if df_adjust == "CR1":
        if G < 2 or n <= k:
            raise np.linalg.LinAlgError(
                "CR1 adjustment needs at least 2 clusters and n > k")
        vcov = vcov * (G / (G - 1.0)) * ((n - 1.0) / (n - k))
    vcov = 0.5 * (vcov + vcov.T)
    return OlsFit(coefficients=beta, names=names, vcov=vcov, residuals=resid,
                  n=n, n_clusters=G, df_adjust=df_adjust)


def fit_design(design: Design, df_adjust: str = "CR1") -> OlsFit:
    return ols_cluster(design.y, design.X, design.clusters,
                       names=design.names, df_adjust=df_adjust)


def contrast(fit: OlsFit, label_a: str, label_b: str) -> Contrast:
    """Difference of two coefficients with its standard error."""
    ia, ib = fit.index(label_a), fit.index(label_b)
    est = float(fit.coefficients[ia] - fit.coefficients[ib])
    var = fit.vcov[ia, ia] + fit.vcov[ib, ib] - 2.0 * fit.vcov[ia, ib]
    return Contrast(estimate=est, std_error=float(math.sqrt(max(var, 0.0))))


def significance_stars(pvalue: float,
                       thresholds: tuple[float, ...] = (0.05, 0.01, 0.001)) -> str:
    """Stars for a p-value; thresholds ordered loosest first."""
    return "*" * sum(pvalue < t for t in thresholds)


def summary_table(fit: OlsFit,
                  thresholds: tuple[float, ...] = (0.05, 0.01, 0.001)) -> str:
    """Aligned text table of coefficients, SEs and significance stars."""
    width = max(len(n) for n in fit.names)
    lines = [f"{'':{width}}  {'coef':>12}  {'se':>12}",
             "-" * (width + 30)]
    for name in fit.names:
        stars = significance_stars(fit.pvalue(name), thresholds)
        lines.append(
            f"{name:{width}}  {fit.coef(name):>12.6f}  "
            f"{fit.se(name):>12.6f}{stars}")
    lines.append(f"n = {fit.n}, clusters = {fit.n_clusters}, "
                 f"vcov = {fit.df_adjust}")
    return "\n".join(lines)


def fit_to_dict(fit: OlsFit) -> dict:
    """JSON-ready summary of an OLS fit."""
    return {
        "coefficients": {n: fit.coef(n) for n in fit.names},
        "std_errors": {n: fit.se(n) for n in fit.names},
        "pvalues": {n: fit.pvalue(n) for n in fit.names},
        "n": fit.n,
        "n_clusters": fit.n_clusters,
        "df_adjust": fit.df_adjust,
    }
