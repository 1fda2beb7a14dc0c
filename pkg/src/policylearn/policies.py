"""Policy classes mapping covariates to treatment arms.

All deterministic variants are pure: the same features always yield the
same assignment. Argmax ties break to the lowest arm id throughout so
that comparisons between fitted rules are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .validation import as_float_matrix


@dataclass(frozen=True)
class Leaf:
    arm: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


class Policy:
    """Interface: ``assign(X)`` returns one arm id per row of X."""

    def assign(self, X, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantPolicy(Policy):
    """One-size-fits-all rule: the same arm for everyone."""

    arm: int

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        return np.full(X.shape[0], self.arm, dtype=np.int64)


@dataclass(frozen=True)
class StochasticPolicy(Policy):
    """Random assignment with fixed arm weights; needs a seed to draw."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")

    def assign(self, X, seed=None):
        if seed is None:
            raise ValueError("stochastic assignment requires a seed")
        X = as_float_matrix(X)
        rng = np.random.default_rng(seed)
        w = np.asarray(self.weights, dtype=np.float64)
        return rng.choice(w.size, size=X.shape[0], p=w).astype(np.int64)


@dataclass(frozen=True)
class QuadrantPolicy(Policy):
    """Assign ``arm_in`` inside the quadrant spanned by two features.

    The row lands inside when ``s1 * (x[j1] - b1) >= 0`` and
    ``s2 * (x[j2] - b2) >= 0``; the decision boundary belongs to the
    inside.
    """

    j1: int
    j2: int
    s1: int
    s2: int
    b1: float
    b2: float
    arm_in: int
    arm_out: int

    def __post_init__(self):
        if self.s1 not in (-1, 1) or self.s2 not in (-1, 1):
            raise ValueError("signs must be -1 or +1")

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        _check_feature(self.j1, X)
        _check_feature(self.j2, X)
        inside = (self.s1 * (X[:, self.j1] - self.b1) >= 0) & \
                 (self.s2 * (X[:, self.j2] - self.b2) >= 0)
        return np.where(inside, self.arm_in, self.arm_out).astype(np.int64)


@dataclass(frozen=True)
class LinearPolicy(Policy):
    """Assign ``arm_pos`` when ``beta[0] + beta[1:] @ x >= 0``."""

    beta: tuple[float, ...]  # intercept followed by one weight per feature
    arm_pos: int
    arm_neg: int

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.size != X.shape[1] + 1:
            raise ValueError(
                f"beta must have length p+1={X.shape[1] + 1}, got {beta.size}")
        score = beta[0] + X @ beta[1:]
        return np.where(score >= 0, self.arm_pos, self.arm_neg).astype(np.int64)


@dataclass(frozen=True)
class CubicPolicy(Policy):
    """Cubic boundary in two features: linear in the first, cubic in the second."""

    j1: int
    j2: int
    beta: tuple[float, float, float, float, float]
    arm_pos: int
    arm_neg: int

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        _check_feature(self.j1, X)
        _check_feature(self.j2, X)
        b0, b1, b2, b3, b4 = self.beta
        x1 = X[:, self.j1]
        x2 = X[:, self.j2]
        score = b0 + b1 * x1 + b2 * x2 + b3 * x2**2 + b4 * x2**3
        return np.where(score >= 0, self.arm_pos, self.arm_neg).astype(np.int64)


@dataclass(frozen=True)
class TreePolicy(Policy):
    """Shallow decision tree whose leaves are treatment arms."""

    root: TreeNode

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        _assign_tree(self.root, X, np.arange(X.shape[0]), out)
        return out

    @property
    def depth(self) -> int:
        return tree_depth(self.root)


@dataclass(frozen=True)
class PlugInPolicy(Policy):
    """Row-wise argmax over a matrix of estimated per-arm values.

    Bound to the dataset its value matrix was computed for: assignment
    requires X with the same number of rows.
    """

    tau: np.ndarray

    def __post_init__(self):
        tau = as_float_matrix(self.tau, "tau")
        if not np.all(np.isfinite(tau)):
            raise ValueError("tau must be finite")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)

    def assign(self, X, seed=None):
        X = as_float_matrix(X)
        if X.shape[0] != self.tau.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} rows but tau was built for {self.tau.shape[0]}")
        return np.argmax(self.tau, axis=1).astype(np.int64)


def plug_in_policy(tau) -> PlugInPolicy:
    """Policy assigning each row the arm with the largest estimated value."""
    return PlugInPolicy(tau=np.asarray(tau, dtype=np.float64))


def _check_feature(j: int, X: np.ndarray) -> None:
    if not 0 <= j < X.shape[1]:
        raise ValueError(f"feature index {j} out of range for p={X.shape[1]}")


def _assign_tree(node: TreeNode, X: np.ndarray, rows: np.ndarray,
                 out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[rows] = node.arm
        return
    _check_feature(node.feature, X)
    left = X[rows, node.feature] <= node.threshold
    _assign_tree(node.left, X, rows[left], out)
    _assign_tree(node.right, X, rows[~left], out)


def tree_depth(root: TreeNode) -> int:
    """Leaf depth is 0; a split is one deeper than its deepest child."""
    if isinstance(root, Leaf):
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))


def tree_to_dict(root: TreeNode) -> dict:
    if isinstance(root, Leaf):
        return {"arm": int(root.arm)}
    return {
        "feature": int(root.feature),
        "threshold": float(root.threshold),
        "left": tree_to_dict(root.left),
        "right": tree_to_dict(root.right),
    }


def tree_from_dict(doc: dict) -> TreeNode:
    if "arm" in doc:
        return Leaf(arm=int(doc["arm"]))
    return Split(
        feature=int(doc["feature"]),
        threshold=float(doc["threshold"]),
        left=tree_from_dict(doc["left"]),
        right=tree_from_dict(doc["right"]),
    )


def tree_to_json(root: TreeNode, **dumps_kwargs) -> str:
    return json.dumps(tree_to_dict(root), **dumps_kwargs)


def tree_from_json(text: str) -> TreeNode:
    return tree_from_dict(json.loads(text))


def export_tree(root: TreeNode, feature_names, arm_names=None) -> str:
    """Render a tree as DOT graph text.

    Split nodes are labeled ``name <= threshold``; the edge labeled
    ``true`` leads to the child taken when the condition holds. Output is
    deterministic: nodes are numbered in preorder.
    """
    feature_names = list(feature_names)
    max_feature = _max_feature(root)
    if max_feature >= len(feature_names):
        raise ValueError("feature_names too short for this tree")
    lines = ["digraph policy_tree {", "  node [shape=box];"]
    counter = [0]

    def emit(node: TreeNode) -> int:
        nid = counter[0]
        counter[0] += 1
        if isinstance(node, Leaf):
            label = arm_names[node.arm] if arm_names else f"arm {node.arm}"
            lines.append(f'  n{nid} [label="{label}"];')
            return nid
        label = f"{feature_names[node.feature]} <= {node.threshold:.10g}"
        lines.append(f'  n{nid} [label="{label}"];')
        left_id = emit(node.left)
        right_id = emit(node.right)
        lines.append(f'  n{nid} -> n{left_id} [label="true"];')
        lines.append(f'  n{nid} -> n{right_id} [label="false"];')
        return nid

    emit(root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _max_feature(root: TreeNode) -> int:
    if isinstance(root, Leaf):
        return -1
    return max(root.feature, _max_feature(root.left), _max_feature(root.right))
