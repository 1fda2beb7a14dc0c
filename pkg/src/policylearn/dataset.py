"""Dataset container, CSV ingestion and identification diagnostics.

The central object is :class:`Dataset`: an immutable bundle of features,
observed actions, outcomes and cluster ids, optionally carrying known
assignment probabilities per arm. Arm ids run from 0 to ``d_arms - 1``
and arm 0 is reserved for the no-treatment option; simulators and
evaluators rely on that convention.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .validation import as_float_matrix, check_arm_ids, check_same_length

PROPENSITY_ROW_TOL = 1e-9


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class SchemaError(DataError):
    """Raised when required columns are missing or mis-declared."""


class ParseError(DataError):
    """Raised when a cell cannot be parsed; carries the offending row."""


def dense_cluster_ids(labels) -> np.ndarray:
    """Map arbitrary cluster labels to dense ids 0..C-1 (sorted label order)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cluster labels are empty")
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(np.int64)


@dataclass
class Dataset:
    """Observations {features X, action A, outcome Y, cluster id}.

    Parameters
    ----------
    features : ndarray of shape (n, p)
        Real-valued feature matrix; categoricals must be pre-encoded.
    feature_names : sequence of str
        One label per feature column.
    actions : ndarray of shape (n,)
        Arm id received by each observation, in 0..d_arms-1.
    outcomes : ndarray of shape (n,)
        Realized outcomes.
    clusters : ndarray of shape (n,)
        Dense cluster ids (0..C-1). Treatment is assigned at this level.
    d_arms : int
        Number of arms D. Arm 0 is the no-treatment option.
    propensities : ndarray of shape (n, d_arms), optional
        Known assignment probabilities; rows must sum to one.
    wave : ndarray of shape (n,), optional
        Experiment wave per row, values in {1, 2}.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    actions: np.ndarray
    outcomes: np.ndarray
    clusters: np.ndarray
    d_arms: int
    propensities: np.ndarray | None = None
    wave: np.ndarray | None = None
    _frozen: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        n = self.features.shape[0]
        self.feature_names = tuple(str(f) for f in self.feature_names)
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length must match feature columns")
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.outcomes = np.ascontiguousarray(self.outcomes, dtype=np.float64)
        self.clusters = np.asarray(self.clusters, dtype=np.int64)
        for arr, name in ((self.actions, "actions"), (self.outcomes, "outcomes"),
                          (self.clusters, "clusters")):
            check_same_length(n, arr, name)
        if n == 0:
            raise DataError("empty input: dataset has no rows")
        if self.d_arms < 1:
            raise DataError("d_arms must be at least 1")
        check_arm_ids(self.actions, self.d_arms)
        uniq = np.unique(self.clusters)
        if uniq[0] != 0 or uniq[-1] != uniq.size - 1:
            raise DataError("cluster ids must be dense 0..C-1; "
                            "use dense_cluster_ids() to normalize")
        if self.propensities is not None:
            self.propensities = as_float_matrix(self.propensities, "propensities")
            if self.propensities.shape != (n, self.d_arms):
                raise DataError(
                    f"propensities must have shape ({n}, {self.d_arms})")
            if np.any(self.propensities <= 0.0):
                raise DataError("propensities must be strictly positive")
            sums = self.propensities.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > PROPENSITY_ROW_TOL):
                bad = int(np.argmax(np.abs(sums - 1.0)))
                raise DataError(
                    f"propensity row {bad} sums to {sums[bad]:.12g}, expected 1")
        if self.wave is not None:
            self.wave = np.asarray(self.wave, dtype=np.int64)
            check_same_length(n, self.wave, "wave")
            if not np.all(np.isin(self.wave, (1, 2))):
                raise DataError("wave values must be 1 or 2")
        for arr in (self.features, self.actions, self.outcomes, self.clusters,
                    self.propensities, self.wave):
            if arr is not None:
                arr.setflags(write=False)
        self._frozen = True

    def __setattr__(self, name, value):
        if getattr(self, "_frozen", False) and name != "_frozen":
            raise AttributeError("Dataset is immutable after construction")
        super().__setattr__(name, value)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_clusters(self) -> int:
        return int(self.clusters.max()) + 1

    def feature(self, name: str) -> np.ndarray:
        """Column of the feature matrix by name."""
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None
        return self.features[:, j]

    def subset(self, idx) -> "Dataset":
        """Row subset with cluster ids re-densified."""
        idx = np.asarray(idx)
        return Dataset(
            features=self.features[idx],
            feature_names=self.feature_names,
            actions=self.actions[idx],
            outcomes=self.outcomes[idx],
            clusters=dense_cluster_ids(self.clusters[idx]),
            d_arms=self.d_arms,
            propensities=None if self.propensities is None else self.propensities[idx],
            wave=None if self.wave is None else self.wave[idx],
        )

    def with_propensities(self, propensities: np.ndarray) -> "Dataset":
        return replace(self, propensities=propensities, _frozen=False)

    def with_outcomes(self, outcomes: np.ndarray) -> "Dataset":
        return replace(self, outcomes=outcomes, _frozen=False)

    def with_actions(self, actions: np.ndarray, outcomes: np.ndarray) -> "Dataset":
        return replace(self, actions=actions, outcomes=outcomes, _frozen=False)


@dataclass(frozen=True)
class ValidationReport:
    """Findings from checking the identification assumptions on a dataset."""

    overlap_ok: bool
    min_propensity: float
    eta: float
    bounded_ok: bool
    outcome_range: tuple[float, float]
    issues: tuple[str, ...]


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``numeric`` and ``categorical`` list feature columns. Categorical
    columns are one-hot encoded with lexicographic level order and the
    indicator columns are named ``column=level``. Propensity columns, if
    present, must be named ``prop_0 .. prop_{D-1}``.
    """

    action: str
    outcome: str
    cluster: str
    numeric: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    wave: str | None = None
    n_arms: int | None = None
    propensity_prefix: str = "prop_"


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"row {row}: cannot parse {col}={cell!r} as a number") from None


def _parse_int(cell: str, row: int, col: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"row {row}: cannot parse {col}={cell!r} as an integer") from None


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Load a dataset from a UTF-8 CSV file with a header row.

    Row order is preserved. Categorical feature columns are one-hot
    encoded with deterministic (lexicographic) level ordering, so loading
    the same file twice yields identical matrices.

    Raises
    ------
    SchemaError
        If a declared column is missing from the header.
    ParseError
        If a cell cannot be parsed; the message names the row.
    DataError
        If the file is empty or an action id is out of range.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"empty input: {path} has no rows")
    header = rows[0]
    body = rows[1:]
    if not body:
        raise DataError(f"empty input: {path} has a header but no data rows")

    col_index: dict[str, int] = {}
    for i, name in enumerate(header):
        col_index[name.strip()] = i

    def require(col: str) -> int:
        if col not in col_index:
            raise SchemaError(f"missing column {col!r} (header: {header})")
        return col_index[col]

    i_action = require(schema.action)
    i_outcome = require(schema.outcome)
    i_cluster = require(schema.cluster)
    i_wave = require(schema.wave) if schema.wave else None
    num_idx = [(c, require(c)) for c in schema.numeric]
    cat_idx = [(c, require(c)) for c in schema.categorical]

    n = len(body)
    actions = np.empty(n, dtype=np.int64)
    outcomes = np.empty(n, dtype=np.float64)
    raw_clusters = []
    wave = np.empty(n, dtype=np.int64) if i_wave is not None else None
    numeric = np.empty((n, len(num_idx)), dtype=np.float64)
    cat_values: list[list[str]] = [[] for _ in cat_idx]

    for r, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} cells, got {len(row)}")
        actions[r] = _parse_int(row[i_action].strip(), r, schema.action)
        outcomes[r] = _parse_float(row[i_outcome].strip(), r, schema.outcome)
        raw_clusters.append(row[i_cluster].strip())
        if i_wave is not None:
            wave[r] = _parse_int(row[i_wave].strip(), r, schema.wave)
        for j, (c, i) in enumerate(num_idx):
            numeric[r, j] = _parse_float(row[i].strip(), r, c)
        for j, (_, i) in enumerate(cat_idx):
            cat_values[j].append(row[i].strip())

    d_arms = schema.n_arms if schema.n_arms is not None else int(actions.max()) + 1
    if actions.size and (actions.min() < 0 or actions.max() >= d_arms):
        bad = int(np.flatnonzero((actions < 0) | (actions >= d_arms))[0])
        raise DataError(
            f"row {bad}: action {int(actions[bad])} out of range 0..{d_arms - 1}")

    blocks = [numeric]
    names = [c for c, _ in num_idx]
    for j, (col, _) in enumerate(cat_idx):
        levels = sorted(set(cat_values[j]))
        vals = np.asarray(cat_values[j])
        for level in levels:
            blocks.append((vals == level).astype(np.float64)[:, None])
            names.append(f"{col}={level}")
    features = np.hstack(blocks) if names else np.empty((n, 0))

    propensities = None
    prop_cols = [f"{schema.propensity_prefix}{a}" for a in range(d_arms)]
    present = [c for c in prop_cols if c in col_index]
    if present:
        if len(present) != d_arms:
            raise SchemaError(
                f"propensity columns incomplete: found {present}, expected {prop_cols}")
        propensities = np.empty((n, d_arms), dtype=np.float64)
        for a, c in enumerate(prop_cols):
            i = col_index[c]
            for r, row in enumerate(body):
                propensities[r, a] = _parse_float(row[i].strip(), r, c)

    return Dataset(
        features=features,
        feature_names=tuple(names),
        actions=actions,
        outcomes=outcomes,
        clusters=dense_cluster_ids(raw_clusters),
        d_arms=d_arms,
        propensities=propensities,
        wave=wave,
    )


def validate(ds: Dataset, eta: float) -> ValidationReport:
    """Check overlap and boundedness; findings land in the report, never raise.

    ``min_propensity`` is the smallest stored assignment probability when
    propensities are present, else the smallest empirical arm frequency.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    issues: list[str] = []
    if ds.propensities is not None:
        min_prop = float(ds.propensities.min())
    else:
        counts = np.bincount(ds.actions, minlength=ds.d_arms)
        min_prop = float(counts.min()) / ds.n
        for a in np.flatnonzero(counts == 0):
            issues.append(f"arm {int(a)} has no observations")
    overlap_ok = min_prop >= eta
    if not overlap_ok:
        issues.append(f"min propensity {min_prop:.6g} below eta {eta:.6g}")

    finite = np.isfinite(ds.outcomes)
    bounded_ok = bool(finite.all())
    if not bounded_ok:
        for r in np.flatnonzero(~finite):
            issues.append(f"outcome not finite at row {int(r)}")
    feat_finite = np.isfinite(ds.features).all(axis=1)
    if not feat_finite.all():
        for r in np.flatnonzero(~feat_finite):
            issues.append(f"feature not finite at row {int(r)}")
    finite_out = ds.outcomes[finite]
    if finite_out.size:
        rng = (float(finite_out.min()), float(finite_out.max()))
    else:
        rng = (float("nan"), float("nan"))
    return ValidationReport(
        overlap_ok=overlap_ok,
        min_propensity=min_prop,
        eta=float(eta),
        bounded_ok=bounded_ok,
        outcome_range=rng,
        issues=tuple(issues),
    )


def known_propensities(ds: Dataset, shares) -> Dataset:
    """Attach constant, known assignment shares to every row.

    ``shares`` must have one entry per arm, each positive, summing to one
    within 1e-9.
    """
    shares = np.asarray(shares, dtype=np.float64)
    if shares.ndim != 1 or shares.size != ds.d_arms:
        raise DataError(f"shares must have length {ds.d_arms}")
    if abs(float(shares.sum()) - 1.0) > PROPENSITY_ROW_TOL:
        raise DataError(f"shares sum to {shares.sum():.12g}, expected 1")
    if np.any(shares <= 0):
        raise DataError("shares must be strictly positive")
    return ds.with_propensities(np.tile(shares, (ds.n, 1)))
