"""Synthetic two-phase experiment harness.

The data-generating process produces a registry-like population of
eligible immigrants (age, gender, years in the country, years in the
city, region of nationality) living in building clusters, with binary
application outcomes whose probabilities are additive on the probability
scale: a base rate, a per-letter lift, and optional group-specific
shifts. The two-phase runner randomizes letters within an exploration
group, fits a policy tree on first-wave scores, then fields it against a
randomized benchmark on the held-out group.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset, known_propensities
from .evaluate import GROUP_NOTHING, GROUP_TREE, letter_label
from .forest import ForestParams, RegressionForest
from .nuisance import NuisanceFit, fit_outcome_models, fit_propensities, make_folds
from .policies import Policy, TreePolicy
from .scores import ScoreMatrix, aipw_scores
from .treesearch import SearchConfig, SearchResult, exact_search, hybrid_search

REGIONS = (
    "Americas", "Asia", "CEE", "Germany-Austria", "Italy",
    "MENA", "SEE", "SSA", "Spain-Portugal", "Stateless",
)
REGION_PROBS = (0.08, 0.09, 0.10, 0.23, 0.11, 0.06, 0.16, 0.04, 0.09, 0.04)

FEATURE_NAMES = ("age", "female", "years_ch", "years_zh") + tuple(
    f"region={r}" for r in REGIONS)


@dataclass(frozen=True)
class HeterogeneityRule:
    """Additive shift of one arm's outcome probability on a subgroup.

    Numeric features use the closed interval [lo, hi] (None leaves a side
    unbounded); the region feature uses level membership.
    """

    feature: str
    arm: int
    delta: float
    lo: float | None = None
    hi: float | None = None
    levels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FeatureSpec:
    """Marginal distributions of the simulated covariates."""

    region_probs: tuple[float, ...] = REGION_PROBS
    age_mean: float = 42.0
    age_sd: float = 12.0
    age_range: tuple[int, int] = (18, 90)
    years_ch_scale: float = 9.0
    years_ch_range: tuple[int, int] = (10, 45)
    years_zh_scale: float = 7.0
    years_zh_min: int = 2
    female_share: float = 0.5


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the synthetic application-outcome process.

    Defaults calibrate the no-letter application rate to 6.0% and the
    three letter lifts to 1.08, 4.33 and 3.51 percentage points. With no
    heterogeneity rules the lifts are exact; ``default_heterogeneity``
    supplies a moderate, policy-relevant pattern.
    """

    n: int = 5145
    d_arms: int = 4
    baseline_rate: float = 0.06
    arm_effects: tuple[float, ...] = (0.0108, 0.0433, 0.0351)
    heterogeneity: tuple[HeterogeneityRule, ...] = ()
    features: FeatureSpec = field(default_factory=FeatureSpec)
    cluster_size_probs: tuple[float, ...] = (
        0.48, 0.22, 0.12, 0.08, 0.05, 0.03, 0.015, 0.005)
    cluster_effect_sd: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if len(self.arm_effects) != self.d_arms - 1:
            raise ValueError("arm_effects must have one entry per treatment arm")


def default_heterogeneity(scale: float = 1.0) -> tuple[HeterogeneityRule, ...]:
    """Moderate heterogeneity: welcome-type letters work better for
    German/Austrian and American immigrants, the requirements letter for
    long-residency immigrants and Central/South-East Europeans, and the
    complexity letter for the 13-16 residency-year band. A small age tilt
    on the welcome letter adds structure a shallow tree cannot express.
    """
    s = float(scale)
    return (
        HeterogeneityRule("region", arm=3, delta=0.030 * s,
                          levels=("Germany-Austria", "Americas")),
        HeterogeneityRule("years_ch", arm=2, delta=0.025 * s, lo=30),
        HeterogeneityRule("region", arm=2, delta=0.012 * s,
                          levels=("CEE", "SEE")),
        HeterogeneityRule("years_ch", arm=1, delta=0.055 * s, lo=13, hi=16),
        HeterogeneityRule("age", arm=3, delta=0.008 * s, lo=55),
        HeterogeneityRule("age", arm=3, delta=-0.008 * s, hi=34),
    )


@dataclass(frozen=True)
class DgpOracle:
    """Ground truth behind a generated population."""

    mu: np.ndarray                  # (n, D) true outcome probabilities
    optimal_assignment: np.ndarray  # argmax over arms, ties to lowest id
    potential_outcomes: np.ndarray  # (n, D) wave-1 potential outcomes
    clamp_fraction: float

    def draw_potentials(self, seed) -> np.ndarray:
        """Fresh potential-outcome table (for a later wave)."""
        rng = np.random.default_rng(seed)
        return (rng.random(self.mu.shape) < self.mu).astype(np.float64)


def _rule_mask(rule: HeterogeneityRule, raw: dict[str, np.ndarray]) -> np.ndarray:
    if rule.feature == "region":
        if not rule.levels:
            raise ValueError("region rules need levels")
        return np.isin(raw["region"], rule.levels)
    if rule.feature not in raw:
        raise ValueError(f"unknown rule feature {rule.feature!r}")
    x = raw[rule.feature]
    mask = np.ones(x.shape[0], dtype=bool)
    if rule.lo is not None:
        mask &= x >= rule.lo
    if rule.hi is not None:
        mask &= x <= rule.hi
    return mask


def _draw_clusters(rng, n, size_probs) -> np.ndarray:
    sizes = np.arange(1, len(size_probs) + 1)
    probs = np.asarray(size_probs, dtype=np.float64)
    probs = probs / probs.sum()
    mean_size = float(sizes @ probs)
    draws = rng.choice(sizes, size=int(np.ceil(n / mean_size)) + 8, p=probs)
    while draws.sum() < n:
        draws = np.concatenate([draws, rng.choice(sizes, size=32, p=probs)])
    cum = np.cumsum(draws)
    n_clusters = int(np.searchsorted(cum, n)) + 1
    sizes_used = draws[:n_clusters].copy()
    sizes_used[-1] -= cum[n_clusters - 1] - n
    return np.repeat(np.arange(n_clusters), sizes_used)


def gen_population(cfg: DgpConfig) -> tuple[Dataset, DgpOracle]:
    """Draw a population with its ground truth.

    The returned dataset is the pre-experiment state: everyone untreated
    (arm 0) with the control potential outcome realized. Regions are
    drawn per building cluster so that nationality blocks never split a
    building.
    """
    rng = np.random.default_rng(cfg.seed)
    n, D = cfg.n, cfg.d_arms
    fs = cfg.features

    clusters = _draw_clusters(rng, n, cfg.cluster_size_probs)
    n_clusters = int(clusters.max()) + 1

    region_probs = np.asarray(fs.region_probs, dtype=np.float64)
    region_probs = region_probs / region_probs.sum()
    region_of_cluster = rng.choice(len(REGIONS), size=n_clusters, p=region_probs)
    region_idx = region_of_cluster[clusters]
    region = np.asarray(REGIONS)[region_idx]

    age = np.clip(np.rint(rng.normal(fs.age_mean, fs.age_sd, size=n)),
                  fs.age_range[0], fs.age_range[1])
    lo, hi = fs.years_ch_range
    years_ch = np.minimum(lo + np.floor(rng.exponential(fs.years_ch_scale, size=n)), hi)
    years_zh = np.minimum(
        fs.years_zh_min + np.floor(rng.exponential(fs.years_zh_scale, size=n)),
        years_ch)
    female = (rng.random(n) < fs.female_share).astype(np.float64)

    raw = {"age": age, "female": female, "years_ch": years_ch,
           "years_zh": years_zh, "region": region}

    base = np.empty(D)
    base[0] = cfg.baseline_rate
    base[1:] = cfg.baseline_rate + np.asarray(cfg.arm_effects)
    mu = np.tile(base, (n, 1))
    for rule in cfg.heterogeneity:
        if not 0 <= rule.arm < D:
            raise ValueError(f"rule arm {rule.arm} out of range")
        mu[_rule_mask(rule, raw), rule.arm] += rule.delta
    if cfg.cluster_effect_sd > 0:
        mu += rng.normal(0.0, cfg.cluster_effect_sd, size=n_clusters)[clusters][:, None]

    clipped = (mu < 0.0) | (mu > 1.0)
    clamp_fraction = float(clipped.any(axis=1).mean())
    np.clip(mu, 0.0, 1.0, out=mu)
    if clamp_fraction > 0.01:
        warnings.warn(
            f"outcome probabilities clamped on {clamp_fraction:.1%} of rows",
            stacklevel=2)

    potential = (rng.random((n, D)) < mu).astype(np.float64)

    features = np.column_stack([
        age, female, years_ch, years_zh,
        *(np.asarray(region_idx == k, dtype=np.float64) for k in range(len(REGIONS))),
    ])
    ds = Dataset(
        features=features,
        feature_names=FEATURE_NAMES,
        actions=np.zeros(n, dtype=np.int64),
        outcomes=potential[:, 0],
        clusters=clusters,
        d_arms=D,
    )
    oracle = DgpOracle(
        mu=mu,
        optimal_assignment=np.argmax(mu, axis=1).astype(np.int64),
        potential_outcomes=potential,
        clamp_fraction=clamp_fraction,
    )
    return ds, oracle


def block_labels(ds: Dataset, feature: str) -> np.ndarray:
    """Per-row block labels from a plain or one-hot encoded feature."""
    if feature in ds.feature_names:
        return ds.feature(feature)
    prefix = f"{feature}="
    cols = [j for j, f in enumerate(ds.feature_names) if f.startswith(prefix)]
    if not cols:
        raise KeyError(f"no feature or one-hot group named {feature!r}")
    levels = np.asarray([ds.feature_names[j][len(prefix):] for j in cols])
    block = np.argmax(ds.features[:, cols], axis=1)
    return levels[block]


def _largest_remainder(count: int, shares: np.ndarray) -> np.ndarray:
    ideal = count * shares
    counts = np.floor(ideal).astype(np.int64)
    frac = ideal - counts
    remainder = count - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-frac, kind="stable")  # ties favor lower arm ids
        counts[order[:remainder]] += 1
    return counts


def block_randomize(ds: Dataset, blocks, shares, seed) -> np.ndarray:
    """Assign whole clusters to arms, balancing shares within each block.

    Within each block, cluster counts per arm follow ``shares`` up to
    largest-remainder rounding. Every member of a cluster receives the
    same arm. A block with fewer clusters than positive-share arms still
    gets a best-effort allocation, with a warning.
    """
    shares = np.asarray(shares, dtype=np.float64)
    if np.any(shares < 0) or abs(float(shares.sum()) - 1.0) > 1e-9:
        raise ValueError("shares must be nonnegative and sum to 1")
    blocks = np.asarray(blocks)
    if blocks.shape[0] != ds.n:
        raise ValueError("blocks must have one label per row")
    first_row = np.unique(ds.clusters, return_index=True)[1]
    block_of_cluster = blocks[first_row]
    rng = np.random.default_rng(seed)
    n_positive = int((shares > 0).sum())
    arm_of_cluster = np.empty(ds.n_clusters, dtype=np.int64)
    for label in np.unique(block_of_cluster):
        members = np.flatnonzero(block_of_cluster == label)
        if members.size < n_positive:
            warnings.warn(
                f"block {label!r} has {members.size} clusters for "
                f"{n_positive} arms; shares are best-effort", stacklevel=2)
        members = members[rng.permutation(members.size)]
        counts = _largest_remainder(members.size, shares)
        start = 0
        for a, c in enumerate(counts):
            arm_of_cluster[members[start:start + c]] = a
            start += c
    return arm_of_cluster[ds.clusters]


@dataclass(frozen=True)
class TwoPhaseConfig:
    """Two-phase experiment: explore on a 60% split, then field the tree."""

    dgp: DgpConfig = field(default_factory=DgpConfig)
    explore_share: float = 0.6
    arm_shares_explore: tuple[float, ...] = (0.0, 1 / 3, 1 / 3, 1 / 3)
    b1_share: float = 0.5
    tree_depth: int = 3
    block_feature: str = "region"
    split_step: int = 1
    min_node_size: int = 1
    search_method: str = "exact"
    hybrid_search_depth: int = 2
    forest: ForestParams = field(default_factory=ForestParams)
    n_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.explore_share < 1:
            raise ValueError("explore_share must lie strictly inside (0, 1)")
        if not 0 < self.b1_share < 1:
            raise ValueError("b1_share must lie strictly inside (0, 1)")
        if abs(sum(self.arm_shares_explore) - 1.0) > 1e-9:
            raise ValueError("arm_shares_explore must sum to 1")


@dataclass(frozen=True)
class TwoPhaseResult:
    """Everything produced by one simulated two-phase experiment."""

    population: Dataset
    oracle: DgpOracle
    wave1: Dataset
    wave1_groups: np.ndarray
    scores: ScoreMatrix
    nuisance: NuisanceFit
    search: SearchResult
    tree: TreePolicy
    wave2: Dataset
    wave2_groups: np.ndarray
    wave2_rows: np.ndarray
    b1_mask: np.ndarray
    stacked: Dataset
    stacked_groups: np.ndarray
    stacked_random: np.ndarray


def run_two_phase(cfg: TwoPhaseConfig, n_jobs: int = 1) -> TwoPhaseResult:
    """Simulate the full two-phase design.

    Phase 1 randomizes letters within the exploration group by cluster
    and block, fits cross-fitted outcome models with the known assignment
    shares plugged in, and searches for the policy tree on the resulting
    score matrix (all wave-1 rows, untreated ones included). Phase 2
    splits the held-out group into a tree-assigned half and a uniformly
    randomized half and realizes second-wave outcomes.
    """
    population, oracle = gen_population(cfg.dgp)
    n, D = population.n, population.d_arms
    seeds = np.random.SeedSequence(cfg.seed).generate_state(8)
    blocks = block_labels(population, cfg.block_feature)

    # phase 1: A/B split and letters within A, both cluster-level and blocked
    ab = block_randomize(population, blocks,
                         (cfg.explore_share, 1.0 - cfg.explore_share), seeds[0])
    group_a = ab == 0
    if not (~group_a).any():
        raise ValueError("explore_share leaves no wave-2 sample")
    if not group_a.any():
        raise ValueError("explore_share leaves no wave-1 treated sample")
    actions1 = np.zeros(n, dtype=np.int64)
    sub_a = population.subset(np.flatnonzero(group_a))
    letters_a = block_randomize(sub_a, blocks[group_a],
                                cfg.arm_shares_explore, seeds[1])
    actions1[group_a] = letters_a
    outcomes1 = oracle.potential_outcomes[np.arange(n), actions1]

    shares = np.asarray(cfg.arm_shares_explore) * cfg.explore_share
    shares[0] += 1.0 - cfg.explore_share
    wave1 = Dataset(
        features=population.features,
        feature_names=population.feature_names,
        actions=actions1,
        outcomes=outcomes1,
        clusters=population.clusters,
        d_arms=D,
        wave=np.ones(n, dtype=np.int64),
    )
    wave1 = known_propensities(wave1, shares)
    wave1_groups = np.where(
        group_a,
        np.asarray([letter_label(a) for a in range(D)])[actions1],
        GROUP_NOTHING)

    # nuisance and scores on all wave-1 data, known shares plugged in
    folds = make_folds(wave1.clusters, cfg.n_folds, int(seeds[2]))
    mu_hat = fit_outcome_models(wave1, folds, cfg.forest, int(seeds[3]),
                                n_jobs=n_jobs)
    nuisance = NuisanceFit(mu_hat=mu_hat, e_hat=wave1.propensities.copy(),
                           learner_config=cfg.forest.to_dict(),
                           seed=int(seeds[3]))
    scores = aipw_scores(wave1, nuisance)

    search_cfg = SearchConfig(depth=cfg.tree_depth, split_step=cfg.split_step,
                              min_node_size=cfg.min_node_size,
                              hybrid_search_depth=cfg.hybrid_search_depth)
    if cfg.search_method == "hybrid":
        search = hybrid_search(wave1.features, scores, search_cfg)
    else:
        search = exact_search(wave1.features, scores, search_cfg)
    tree = TreePolicy(root=search.root)

    # phase 2: split B into tree-assigned B.1 and randomized B.2
    b_rows = np.flatnonzero(~group_a)
    sub_b = population.subset(b_rows)
    split_b = block_randomize(sub_b, blocks[b_rows],
                              (cfg.b1_share, 1.0 - cfg.b1_share), seeds[4])
    b1_mask = split_b == 0
    actions2 = np.empty(b_rows.size, dtype=np.int64)
    actions2[b1_mask] = tree.assign(sub_b.features[b1_mask])
    if (~b1_mask).any():
        sub_b2 = sub_b.subset(np.flatnonzero(~b1_mask))
        uniform = np.zeros(D)
        uniform[1:] = 1.0 / (D - 1)
        actions2[~b1_mask] = block_randomize(
            sub_b2, blocks[b_rows][~b1_mask], uniform, seeds[5])
    potential2 = oracle.draw_potentials(seeds[6])
    outcomes2 = potential2[b_rows, actions2]

    wave2 = Dataset(
        features=sub_b.features,
        feature_names=population.feature_names,
        actions=actions2,
        outcomes=outcomes2,
        clusters=sub_b.clusters,
        d_arms=D,
        wave=np.full(b_rows.size, 2, dtype=np.int64),
    )
    wave2_groups = np.where(
        b1_mask, GROUP_TREE,
        np.asarray([letter_label(a) for a in range(D)])[actions2])

    stacked = Dataset(
        features=np.vstack([population.features, sub_b.features]),
        feature_names=population.feature_names,
        actions=np.concatenate([actions1, actions2]),
        outcomes=np.concatenate([outcomes1, outcomes2]),
        clusters=np.concatenate([population.clusters,
                                 population.clusters[b_rows]]),
        d_arms=D,
        wave=np.concatenate([np.ones(n, dtype=np.int64),
                             np.full(b_rows.size, 2, dtype=np.int64)]),
    )
    stacked_groups = np.concatenate([wave1_groups, wave2_groups])
    stacked_random = np.concatenate([group_a, ~b1_mask])

    return TwoPhaseResult(
        population=population, oracle=oracle,
        wave1=wave1, wave1_groups=wave1_groups,
        scores=scores, nuisance=nuisance, search=search, tree=tree,
        wave2=wave2, wave2_groups=wave2_groups, wave2_rows=b_rows,
        b1_mask=b1_mask,
        stacked=stacked, stacked_groups=stacked_groups,
        stacked_random=stacked_random,
    )


@dataclass(frozen=True)
class ComparisonMatrix:
    """Pairwise reward gains between policy rules across resamples.

    ``mean_diff[i, j]`` is the average gain of the column policy j over
    the row policy i; ``boot_se`` holds the standard deviation of those
    gains across replications.
    """

    policies: tuple[str, ...]
    mean_diff: np.ndarray
    boot_se: np.ndarray
    reps: int
    mean_rewards: np.ndarray

    def reward(self, label: str) -> float:
        return float(self.mean_rewards[self.policies.index(label)])


def validation_exercise(
    ds: Dataset,
    reps: int = 500,
    split: float = 0.6,
    sizes: tuple[int, int] = (4871, 1857),
    depths: tuple[int, ...] = (2, 3),
    hybrid_depths: tuple[tuple[int, int], ...] = ((4, 2),),
    seed: int = 0,
    *,
    scores: ScoreMatrix | None = None,
    forest: ForestParams = ForestParams(),
    n_folds: int = 10,
    clip: float = 0.01,
    split_step: int = 1,
    min_node_size: int = 1,
    plugin_forest: ForestParams = ForestParams(num_trees=40, min_leaf=50),
    cluster_split: bool = True,
    cluster_bootstrap: bool = False,
    n_jobs: int = 1,
) -> ComparisonMatrix:
    """Out-of-sample comparison of policy rules via repeated resampling.

    Scores are cross-fitted once on the full dataset. Each replication
    splits the data 60/40 (by cluster unless ``cluster_split`` is False),
    bootstraps each partition to the requested sizes, fits the trees and
    a plug-in rule on the training scores, and evaluates every policy on
    the validation scores. Compared rules: one constant rule per
    treatment arm, uniform random assignment over treatment arms, the
    requested policy trees, the plug-in rule, and doing nothing.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if scores is None:
        folds = make_folds(ds.clusters, n_folds, seed)
        mu = fit_outcome_models(ds, folds, forest, seed, n_jobs=n_jobs)
        e = fit_propensities(ds, folds, forest, seed, clip=clip, n_jobs=n_jobs)
        scores = aipw_scores(
            ds, NuisanceFit(mu_hat=mu, e_hat=e,
                            learner_config=forest.to_dict(), seed=seed))
    gamma = scores.gamma
    n, D = gamma.shape
    n1, n2 = sizes

    labels = [f"constant_{a}" for a in range(1, D)]
    labels.append("random")
    labels += [f"tree_depth{d}" for d in depths]
    labels += [f"tree_depth{d}_hybrid" for d, _ in hybrid_depths]
    labels += ["plug_in", GROUP_NOTHING]
    P = len(labels)

    uniform = np.zeros(D)
    uniform[1:] = 1.0 / (D - 1)
    cluster_ids = ds.clusters
    uniq_clusters = np.unique(cluster_ids)
    rows_of_cluster = [np.flatnonzero(cluster_ids == c) for c in uniq_clusters]
    rep_seeds = np.random.SeedSequence(seed).spawn(reps)

    def one_rep(ss) -> np.ndarray:
        rng = np.random.default_rng(ss)
        if cluster_split:
            perm = rng.permutation(uniq_clusters.size)
            sizes_perm = np.asarray([rows_of_cluster[c].size for c in perm])
            cut = int(np.searchsorted(np.cumsum(sizes_perm), split * n)) + 1
            train_rows = np.concatenate([rows_of_cluster[c] for c in perm[:cut]])
            test_rows = np.concatenate([rows_of_cluster[c] for c in perm[cut:]])
        else:
            perm = rng.permutation(n)
            cut = int(round(split * n))
            train_rows, test_rows = perm[:cut], perm[cut:]

        if cluster_bootstrap:
            tr = _cluster_resample(rng, train_rows, cluster_ids, n1)
            va = _cluster_resample(rng, test_rows, cluster_ids, n2)
        else:
            tr = rng.choice(train_rows, size=n1, replace=True)
            va = rng.choice(test_rows, size=n2, replace=True)

        X_tr, G_tr = ds.features[tr], gamma[tr]
        X_va, G_va = ds.features[va], gamma[va]
        rewards = np.empty(P)
        k = 0
        for a in range(1, D):
            rewards[k] = G_va[:, a].mean()
            k += 1
        rewards[k] = (G_va @ uniform).mean()
        k += 1
        for d in depths:
            res = exact_search(X_tr, G_tr, SearchConfig(
                depth=d, split_step=split_step, min_node_size=min_node_size))
            assign = TreePolicy(res.root).assign(X_va)
            rewards[k] = G_va[np.arange(n2), assign].mean()
            k += 1
        for d, look in hybrid_depths:
            res = hybrid_search(X_tr, G_tr, SearchConfig(
                depth=d, split_step=split_step, min_node_size=min_node_size,
                hybrid_search_depth=look))
            assign = TreePolicy(res.root).assign(X_va)
            rewards[k] = G_va[np.arange(n2), assign].mean()
            k += 1
        tau = np.empty((n2, D))
        arm_seeds = ss.spawn(D)
        for a in range(D):
            f = RegressionForest.from_params(plugin_forest, seed=arm_seeds[a])
            f.fit(X_tr, G_tr[:, a])
            tau[:, a] = f.predict(X_va)
        assign = np.argmax(tau, axis=1)
        rewards[k] = G_va[np.arange(n2), assign].mean()
        k += 1
        rewards[k] = G_va[:, 0].mean()
        return rewards

    if n_jobs and n_jobs != 1:
        all_rewards = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(one_rep)(ss) for ss in rep_seeds)
    else:
        all_rewards = [one_rep(ss) for ss in rep_seeds]
    rewards = np.vstack(all_rewards)

    diff = rewards[:, None, :] - rewards[:, :, None]  # (reps, row, col)
    return ComparisonMatrix(
        policies=tuple(labels),
        mean_diff=diff.mean(axis=0),
        boot_se=diff.std(axis=0, ddof=1),
        reps=reps,
        mean_rewards=rewards.mean(axis=0),
    )


def _cluster_resample(rng, rows, cluster_ids, target) -> np.ndarray:
    clusters = np.unique(cluster_ids[rows])
    members = {c: rows[cluster_ids[rows] == c] for c in clusters}
    out = []
    count = 0
    while count < target:
        c = clusters[rng.integers(clusters.size)]
        out.append(members[c])
        count += members[c].size
    return np.concatenate(out)[:target]


def oracle_regret(policy: Policy, dgp: DgpConfig, n_mc: int = 200_000,
                  seed: int = 0) -> float:
    """Monte Carlo regret of a policy against the oracle-optimal rule.

    Draws a fresh population and compares expected outcome probabilities
    under the oracle assignment and under the policy.
    """
    ds, oracle = gen_population(replace(dgp, n=n_mc, seed=seed))
    rows = np.arange(ds.n)
    opt = oracle.mu[rows, oracle.optimal_assignment].mean()
    val = oracle.mu[rows, policy.assign(ds.features, seed=seed + 1)].mean()
    return float(opt - val)
