"""Exact and hybrid search for score-maximizing policy trees.

``exact_search`` enumerates every tree of at most the requested depth
whose splits use in-node candidate thresholds, so it returns a global
optimum of the total selected score. ``hybrid_search`` trades optimality
for speed: at each node it looks ahead a limited number of levels with
exact search, commits only the root split, and recurses on the children
with the remaining depth budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._tree_kernel import _build, _search_score
from .policies import Leaf, Split, TreeNode, TreePolicy
from .scores import ScoreMatrix
from .validation import as_float_matrix

MAX_DEPTH = 4
_HEAP_SIZE = 2 ** (MAX_DEPTH + 1) - 1


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the tree search.

    ``split_step`` keeps every split_step-th candidate threshold and is
    the runtime control for deep searches on large samples.
    ``hybrid_search_depth`` is the lookahead used by hybrid search only.
    """

    depth: int = 2
    split_step: int = 1
    min_node_size: int = 1
    hybrid_search_depth: int = 2

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in 0..{MAX_DEPTH}")
        if self.split_step < 1:
            raise ValueError("split_step must be at least 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be at least 1")
        if self.hybrid_search_depth < 1:
            raise ValueError("hybrid_search_depth must be at least 1")


@dataclass(frozen=True)
class SearchResult:
    """A fitted tree, its total selected score, and a work counter."""

    root: TreeNode
    total_score: float
    nodes_evaluated: int


def candidate_thresholds(x, split_step: int = 1) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values, thinned.

    A constant vector has no candidates.
    """
    if split_step < 1:
        raise ValueError("split_step must be at least 1")
    values = np.unique(np.asarray(x, dtype=np.float64))
    mids = 0.5 * (values[1:] + values[:-1])
    return mids[::split_step]


def _as_gamma(gamma) -> np.ndarray:
    if isinstance(gamma, ScoreMatrix):
        return gamma.gamma
    return as_float_matrix(gamma, "gamma")


def _orders(X: np.ndarray) -> np.ndarray:
    n, p = X.shape
    order = np.empty((p, n), dtype=np.int64)
    for j in range(p):
        order[j] = np.argsort(X[:, j], kind="stable")
    return order


def _heap_to_tree(feat, thr, arm, pos) -> TreeNode:
    if feat[pos] < 0:
        return Leaf(arm=int(arm[pos]))
    return Split(
        feature=int(feat[pos]),
        threshold=float(thr[pos]),
        left=_heap_to_tree(feat, thr, arm, 2 * pos + 1),
        right=_heap_to_tree(feat, thr, arm, 2 * pos + 2),
    )


def _leaf_result(gamma: np.ndarray) -> tuple[TreeNode, int]:
    sums = gamma.sum(axis=0)
    return Leaf(arm=int(np.argmax(sums))), 1


def _evaluate_total(root: TreeNode, X: np.ndarray, gamma: np.ndarray) -> float:
    assignment = TreePolicy(root).assign(X)
    return float(gamma[np.arange(X.shape[0]), assignment].sum())


def _check_inputs(X, gamma) -> tuple[np.ndarray, np.ndarray]:
    X = as_float_matrix(X, "X")
    gamma = _as_gamma(gamma)
    if X.shape[0] == 0:
        raise ValueError("empty input: no rows to search over")
    if gamma.shape[0] != X.shape[0]:
        raise ValueError("X and gamma disagree on the number of rows")
    if gamma.shape[1] < 1:
        raise ValueError("gamma needs at least one arm column")
    return X, gamma


def exact_search(X, gamma, cfg: SearchConfig = SearchConfig()) -> SearchResult:
    """Globally optimal policy tree of at most ``cfg.depth`` splits.

    Maximizes ``sum_i gamma[i, pi(x_i)]`` over all admissible trees.
    Ties break to the shallower tree first, then to the earliest split in
    enumeration order (feature ascending, threshold ascending), and leaf
    arms to the lowest arm id. The reported ``total_score`` re-evaluates
    the returned tree against (X, gamma).
    """
    X, gamma = _check_inputs(X, gamma)
    n, p = X.shape
    if p == 0 or cfg.depth == 0:
        root, evaluated = _leaf_result(gamma)
        return SearchResult(root=root,
                            total_score=_evaluate_total(root, X, gamma),
                            nodes_evaluated=evaluated)
    order = _orders(X)
    feat = np.full(_HEAP_SIZE, -1, dtype=np.int64)
    thr = np.zeros(_HEAP_SIZE, dtype=np.float64)
    arm = np.zeros(_HEAP_SIZE, dtype=np.int64)
    counter = np.zeros(1, dtype=np.int64)
    _build(X, gamma, order, cfg.depth, cfg.split_step, cfg.min_node_size,
           counter, feat, thr, arm, 0)
    root = _heap_to_tree(feat, thr, arm, 0)
    return SearchResult(root=root,
                        total_score=_evaluate_total(root, X, gamma),
                        nodes_evaluated=int(counter[0]))


def hybrid_search(X, gamma, cfg: SearchConfig) -> SearchResult:
    """Approximate tree search with limited lookahead.

    At each node an exact search of depth ``min(hybrid_search_depth,
    remaining budget)`` is run; only its root split is committed before
    recursing. With lookahead equal to the full depth the result is the
    exact optimum; otherwise the total score never exceeds it.
    """
    X, gamma = _check_inputs(X, gamma)
    if cfg.depth == 0:
        return exact_search(X, gamma, cfg)
    n, p = X.shape
    if p == 0:
        root, evaluated = _leaf_result(gamma)
        return SearchResult(root=root,
                            total_score=_evaluate_total(root, X, gamma),
                            nodes_evaluated=evaluated)
    counter = np.zeros(1, dtype=np.int64)

    def commit(order: np.ndarray, budget: int) -> TreeNode:
        look = min(cfg.hybrid_search_depth, budget)
        feat = np.full(_HEAP_SIZE, -1, dtype=np.int64)
        thr = np.zeros(_HEAP_SIZE, dtype=np.float64)
        arm = np.zeros(_HEAP_SIZE, dtype=np.int64)
        _build(X, gamma, order, look, cfg.split_step, cfg.min_node_size,
               counter, feat, thr, arm, 0)
        node = _heap_to_tree(feat, thr, arm, 0)
        if look == budget or isinstance(node, Leaf):
            return node
        j, t = node.feature, node.threshold
        rows = order[j]
        mask = X[rows, j] <= t
        n_left = int(mask.sum())
        left_o = np.empty((p, n_left), dtype=np.int64)
        right_o = np.empty((p, order.shape[1] - n_left), dtype=np.int64)
        for f in range(p):
            sel = X[order[f], j] <= t
            left_o[f] = order[f][sel]
            right_o[f] = order[f][~sel]
        return Split(feature=j, threshold=t,
                     left=commit(left_o, budget - 1),
                     right=commit(right_o, budget - 1))

    root = commit(_orders(X), cfg.depth)
    return SearchResult(root=root,
                        total_score=_evaluate_total(root, X, gamma),
                        nodes_evaluated=int(counter[0]))


class PolicyTreeLearner(BaseEstimator):
    """Fit a policy tree to features and a doubly robust score matrix.

    Parameters
    ----------
    depth : int
        Maximum tree depth (0 to 4).
    split_step : int
        Keep every split_step-th candidate threshold per feature.
    min_node_size : int
        Minimum rows routed to each child of any split.
    search : {"exact", "hybrid"}
        Search strategy.
    hybrid_search_depth : int
        Lookahead for hybrid search; ignored by exact search.

    Attributes
    ----------
    tree_ : TreeNode
        Fitted tree structure.
    policy_ : TreePolicy
        The fitted tree wrapped as an assignable policy.
    total_score_ : float
        Total selected score of the fitted tree on the training data.
    nodes_evaluated_ : int
        Candidate nodes scored during the search.
    """

    def __init__(self, depth=2, split_step=1, min_node_size=1,
                 search="exact", hybrid_search_depth=2):
        self.depth = depth
        self.split_step = split_step
        self.min_node_size = min_node_size
        self.search = search
        self.hybrid_search_depth = hybrid_search_depth

    def fit(self, X, gamma):
        cfg = SearchConfig(depth=self.depth, split_step=self.split_step,
                           min_node_size=self.min_node_size,
                           hybrid_search_depth=self.hybrid_search_depth)
        if self.search == "exact":
            result = exact_search(X, gamma, cfg)
        elif self.search == "hybrid":
            result = hybrid_search(X, gamma, cfg)
        else:
            raise ValueError("search must be 'exact' or 'hybrid'")
        self.tree_ = result.root
        self.policy_ = TreePolicy(root=result.root)
        self.total_score_ = result.total_score
        self.nodes_evaluated_ = result.nodes_evaluated
        return self

    def predict(self, X):
        if not hasattr(self, "policy_"):
            raise ValueError("learner is not fitted")
        return self.policy_.assign(X)
