"""Policy taxonomy: assignment semantics, serialization, rendering."""

import re

import numpy as np
import pytest

from policylearn import (ConstantPolicy, CubicPolicy, Leaf, LinearPolicy,
                         QuadrantPolicy, Split, StochasticPolicy, TreePolicy,
                         export_tree, plug_in_policy, tree_depth,
                         tree_from_json, tree_to_json)


class TestAssign:
    def test_constant(self):
        assert ConstantPolicy(arm=2).assign(np.zeros((3, 1))).tolist() == [2, 2, 2]

    def test_quadrant_hand_example(self):
        pol = QuadrantPolicy(j1=0, j2=1, s1=1, s2=1, b1=0.0, b2=0.0,
                             arm_in=1, arm_out=0)
        X = np.array([[1.0, 1.0], [-1.0, 1.0]])
        assert pol.assign(X).tolist() == [1, 0]

    def test_quadrant_boundary_is_inside(self):
        pol = QuadrantPolicy(j1=0, j2=1, s1=1, s2=1, b1=0.0, b2=0.0,
                             arm_in=1, arm_out=0)
        assert pol.assign(np.array([[0.0, 0.0]])).tolist() == [1]

    def test_linear_hand_example(self):
        pol = LinearPolicy(beta=(0.0, 1.0, -1.0), arm_pos=1, arm_neg=0)
        assert pol.assign(np.array([[2.0, 1.0]])).tolist() == [1]
        assert pol.assign(np.array([[0.0, 1.0]])).tolist() == [0]

    def test_cubic(self):
        pol = CubicPolicy(j1=0, j2=1, beta=(0.0, 0.0, 0.0, 0.0, 1.0),
                          arm_pos=1, arm_neg=2)
        X = np.array([[0.0, 2.0], [0.0, -2.0]])
        assert pol.assign(X).tolist() == [1, 2]

    def test_tree_traversal(self):
        root = Split(feature=0, threshold=2.5,
                     left=Leaf(arm=0), right=Leaf(arm=1))
        pol = TreePolicy(root=root)
        assert pol.assign(np.array([[1.0], [3.0]])).tolist() == [0, 1]

    def test_tree_threshold_goes_left(self):
        root = Split(feature=0, threshold=2.5,
                     left=Leaf(arm=0), right=Leaf(arm=1))
        assert TreePolicy(root).assign(np.array([[2.5]])).tolist() == [0]

    def test_feature_index_out_of_range(self):
        pol = QuadrantPolicy(j1=0, j2=5, s1=1, s2=1, b1=0.0, b2=0.0,
                             arm_in=1, arm_out=0)
        with pytest.raises(ValueError, match="feature index"):
            pol.assign(np.zeros((2, 2)))

    def test_deterministic_variants_pure(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        for pol in (ConstantPolicy(1),
                    LinearPolicy(beta=(0.1, 1.0, -1.0, 0.5), arm_pos=1, arm_neg=0),
                    TreePolicy(Split(0, 0.0, Leaf(0), Leaf(1)))):
            assert np.array_equal(pol.assign(X), pol.assign(X))


class TestStochastic:
    def test_requires_seed(self):
        with pytest.raises(ValueError, match="seed"):
            StochasticPolicy(weights=(0.5, 0.5)).assign(np.zeros((2, 1)))

    def test_seeded_draw_deterministic(self):
        pol = StochasticPolicy(weights=(0.3, 0.7))
        X = np.zeros((50, 1))
        assert np.array_equal(pol.assign(X, seed=4), pol.assign(X, seed=4))

    def test_weights_respected(self):
        pol = StochasticPolicy(weights=(0.0, 1.0))
        assert np.all(pol.assign(np.zeros((30, 1)), seed=1) == 1)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            StochasticPolicy(weights=(0.5, 0.6))


class TestPlugIn:
    def test_row_argmax(self):
        pol = plug_in_policy(np.array([[0.1, 0.3, 0.2]]))
        assert pol.assign(np.zeros((1, 1))).tolist() == [1]

    def test_tie_breaks_to_lowest(self):
        pol = plug_in_policy(np.array([[0.3, 0.3, 0.1]]))
        assert pol.assign(np.zeros((1, 1))).tolist() == [0]

    def test_row_count_mismatch(self):
        pol = plug_in_policy(np.zeros((3, 2)))
        with pytest.raises(ValueError, match="rows"):
            pol.assign(np.zeros((2, 1)))

    def test_argmax_invariances(self):
        rng = np.random.default_rng(3)
        tau = rng.normal(size=(40, 3))
        X = np.zeros((40, 1))
        base = plug_in_policy(tau).assign(X)
        shifted = plug_in_policy(tau + rng.normal(size=(40, 1))).assign(X)
        scaled = plug_in_policy(tau * 3.7).assign(X)
        assert np.array_equal(base, shifted)
        assert np.array_equal(base, scaled)


FIGURE_SHAPED = Split(
    feature=2, threshold=12.5,
    left=Split(feature=0, threshold=37.5,
               left=Split(feature=4, threshold=0.5, left=Leaf(2), right=Leaf(3)),
               right=Leaf(3)),
    right=Split(feature=0, threshold=45.5,
                left=Leaf(3),
                right=Split(feature=2, threshold=29.5, left=Leaf(1), right=Leaf(2))),
)


class TestTreeUtilities:
    def test_depth_leaf(self):
        assert tree_depth(Leaf(arm=2)) == 0

    def test_depth_one_split(self):
        assert tree_depth(Split(0, 1.0, Leaf(0), Leaf(1))) == 1

    def test_depth_three_tree(self):
        assert tree_depth(FIGURE_SHAPED) == 3

    def test_json_roundtrip(self):
        text = tree_to_json(FIGURE_SHAPED)
        assert tree_from_json(text) == FIGURE_SHAPED

    def test_tree_partitions_sample(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 5)) * 20 + 30
        assign = TreePolicy(FIGURE_SHAPED).assign(X)
        assert assign.shape == (200,)
        assert np.all((assign >= 0) & (assign <= 3))


def parse_dot(text):
    """Minimal DOT parser used as an independent round-trip oracle."""
    nodes = {}
    for m in re.finditer(r'^\s*(n\d+) \[label="([^"]+)"\];$', text, re.M):
        nodes[m.group(1)] = m.group(2)
    edges = {}
    for m in re.finditer(r'^\s*(n\d+) -> (n\d+) \[label="(true|false)"\];$',
                         text, re.M):
        edges.setdefault(m.group(1), {})[m.group(3)] = m.group(2)

    def build(node_id, names):
        label = nodes[node_id]
        if node_id not in edges:
            arm = int(label.split()[-1])
            return Leaf(arm=arm)
        name, _, thr = label.rpartition(" <= ")
        return Split(feature=names.index(name), threshold=float(thr),
                     left=build(edges[node_id]["true"], names),
                     right=build(edges[node_id]["false"], names))

    return build, nodes


class TestExportTree:
    NAMES = ["age", "female", "years_ch", "years_zh", "region=Italy"]

    def test_single_leaf(self):
        text = export_tree(Leaf(arm=2), self.NAMES)
        assert 'label="arm 2"' in text
        assert "->" not in text

    def test_depth_one_counts(self):
        text = export_tree(Split(0, 2.5, Leaf(0), Leaf(1)), self.NAMES)
        assert len(re.findall(r'^\s*n\d+ \[label=', text, re.M)) == 3
        assert len(re.findall(r'->', text)) == 2

    def test_roundtrip_recovers_structure(self):
        text = export_tree(FIGURE_SHAPED, self.NAMES)
        build, _ = parse_dot(text)
        assert build("n0", self.NAMES) == FIGURE_SHAPED

    def test_arm_names(self):
        text = export_tree(Leaf(arm=1), self.NAMES,
                           arm_names=["nothing", "complexity"])
        assert 'label="complexity"' in text

    def test_names_too_short(self):
        with pytest.raises(ValueError, match="feature_names"):
            export_tree(Split(7, 0.0, Leaf(0), Leaf(1)), ["x"])

    def test_deterministic(self):
        a = export_tree(FIGURE_SHAPED, self.NAMES)
        b = export_tree(FIGURE_SHAPED, self.NAMES)
        assert a == b
