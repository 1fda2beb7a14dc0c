"""CSV ingestion, dataset invariants, overlap diagnostics."""

import numpy as np
import pytest

from policylearn import (CsvSchema, DataError, Dataset, ParseError,
                         SchemaError, known_propensities, load_csv, validate)


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BASIC = """age,income,action,outcome,cluster
30,1.5,0,1.0,a
40,2.5,1,0.0,b
50,3.5,1,1.0,c
"""


def basic_schema(**kw):
    defaults = dict(action="action", outcome="outcome", cluster="cluster",
                    numeric=("age", "income"))
    defaults.update(kw)
    return CsvSchema(**defaults)


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        ds = load_csv(write_csv(tmp_path, BASIC), basic_schema())
        assert ds.n == 3 and ds.p == 2
        assert ds.d_arms == 2
        assert ds.actions.tolist() == [0, 1, 1]
        assert ds.outcomes.tolist() == [1.0, 0.0, 1.0]
        assert ds.feature_names == ("age", "income")

    def test_categorical_one_hot_lexicographic(self, tmp_path):
        text = ("grp,action,outcome,cluster\n"
                "b,0,1,x\n" "a,1,0,y\n" "c,0,1,z\n")
        ds = load_csv(write_csv(tmp_path, text),
                      basic_schema(numeric=(), categorical=("grp",)))
        assert ds.feature_names == ("grp=a", "grp=b", "grp=c")
        assert ds.features[0].tolist() == [0.0, 1.0, 0.0]
        # indicators sum to one per row
        assert np.all(ds.features.sum(axis=1) == 1.0)

    def test_action_out_of_range_names_row_and_value(self, tmp_path):
        text = "x,action,outcome,cluster\n1,0,1,a\n2,5,0,b\n"
        with pytest.raises(DataError, match=r"row 1.*5.*0\.\.2"):
            load_csv(write_csv(tmp_path, text),
                     basic_schema(numeric=("x",), n_arms=3))

    def test_missing_column_is_schema_error(self, tmp_path):
        with pytest.raises(SchemaError, match="missing column 'treated'"):
            load_csv(write_csv(tmp_path, BASIC), basic_schema(action="treated"))

    def test_unparseable_cell_names_row(self, tmp_path):
        text = "x,action,outcome,cluster\n1,0,1,a\noops,1,0,b\n"
        with pytest.raises(ParseError, match="row 1"):
            load_csv(write_csv(tmp_path, text), basic_schema(numeric=("x",)))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="empty input"):
            load_csv(write_csv(tmp_path, ""), basic_schema())

    def test_header_only(self, tmp_path):
        with pytest.raises(DataError, match="empty input"):
            load_csv(write_csv(tmp_path, "age,income,action,outcome,cluster\n"),
                     basic_schema())

    def test_propensity_columns(self, tmp_path):
        text = ("x,action,outcome,cluster,prop_0,prop_1\n"
                "1,0,1,a,0.4,0.6\n" "2,1,0,b,0.4,0.6\n")
        ds = load_csv(write_csv(tmp_path, text),
                      basic_schema(numeric=("x",), n_arms=2))
        assert ds.propensities is not None
        assert ds.propensities[0].tolist() == [0.4, 0.6]

    def test_incomplete_propensity_columns(self, tmp_path):
        text = "x,action,outcome,cluster,prop_0\n1,0,1,a,0.4\n2,1,0,b,0.4\n"
        with pytest.raises(SchemaError, match="incomplete"):
            load_csv(write_csv(tmp_path, text),
                     basic_schema(numeric=("x",), n_arms=2))

    def test_loading_twice_is_identical(self, tmp_path):
        path = write_csv(tmp_path, BASIC)
        a = load_csv(path, basic_schema())
        b = load_csv(path, basic_schema())
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.clusters, b.clusters)

    def test_row_order_preserved(self, tmp_path):
        ds = load_csv(write_csv(tmp_path, BASIC), basic_schema())
        assert ds.features[:, 0].tolist() == [30.0, 40.0, 50.0]


class TestDatasetInvariants:
    def make(self, **kw):
        defaults = dict(
            features=np.array([[1.0], [2.0]]),
            feature_names=("x",),
            actions=np.array([0, 1]),
            outcomes=np.array([0.5, 1.5]),
            clusters=np.array([0, 1]),
            d_arms=2,
        )
        defaults.update(kw)
        return Dataset(**defaults)

    def test_immutable_after_construction(self):
        ds = self.make()
        with pytest.raises(AttributeError):
            ds.d_arms = 3
        with pytest.raises(ValueError):
            ds.outcomes[0] = 7.0

    def test_non_dense_clusters_rejected(self):
        with pytest.raises(DataError, match="dense"):
            self.make(clusters=np.array([1, 2]))

    def test_action_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="0\\.\\.1"):
            self.make(actions=np.array([0, 2]))

    def test_propensity_rows_must_sum_to_one(self):
        with pytest.raises(DataError, match="sums to"):
            self.make(propensities=np.array([[0.5, 0.6], [0.5, 0.5]]))

    def test_subset_redensifies_clusters(self):
        ds = self.make(clusters=np.array([0, 1]))
        sub = ds.subset([1])
        assert sub.clusters.tolist() == [0]


class TestValidate:
    def make(self, propensities=None, outcomes=(0.5, 1.5)):
        return Dataset(
            features=np.array([[1.0], [2.0]]),
            feature_names=("x",),
            actions=np.array([0, 1]),
            outcomes=np.array(outcomes),
            clusters=np.array([0, 1]),
            d_arms=2,
            propensities=propensities,
        )

    def test_uniform_thirds_overlap_ok(self):
        ds = Dataset(
            features=np.ones((3, 1)), feature_names=("x",),
            actions=np.array([0, 1, 2]), outcomes=np.ones(3),
            clusters=np.array([0, 1, 2]), d_arms=3,
            propensities=np.full((3, 3), 1.0 / 3.0))
        report = validate(ds, eta=0.05)
        assert report.overlap_ok
        assert report.min_propensity == pytest.approx(1.0 / 3.0)

    def test_small_propensity_fails_overlap(self):
        ds = self.make(propensities=np.array([[0.01, 0.99], [0.5, 0.5]]))
        report = validate(ds, eta=0.05)
        assert not report.overlap_ok
        assert report.min_propensity == pytest.approx(0.01)

    def test_nonfinite_outcome_lands_in_report(self):
        ds = self.make(outcomes=(0.5, float("nan")))
        report = validate(ds, eta=0.01)
        assert not report.bounded_ok
        assert any("row 1" in issue for issue in report.issues)

    def test_empirical_frequencies_without_propensities(self):
        report = validate(self.make(), eta=0.01)
        assert report.min_propensity == pytest.approx(0.5)

    def test_validate_does_not_mutate(self):
        ds = self.make()
        before = ds.outcomes.copy()
        validate(ds, eta=0.05)
        assert np.array_equal(ds.outcomes, before)


class TestKnownPropensities:
    def test_constant_rows(self):
        ds = Dataset(
            features=np.ones((2, 1)), feature_names=("x",),
            actions=np.array([0, 3]), outcomes=np.ones(2),
            clusters=np.array([0, 1]), d_arms=4)
        out = known_propensities(ds, (0.4, 0.2, 0.2, 0.2))
        assert np.all(out.propensities == np.array([0.4, 0.2, 0.2, 0.2]))
        assert ds.propensities is None  # original untouched

    def test_degenerate_single_arm(self):
        ds = Dataset(
            features=np.ones((2, 1)), feature_names=("x",),
            actions=np.array([0, 0]), outcomes=np.ones(2),
            clusters=np.array([0, 1]), d_arms=1)
        out = known_propensities(ds, (1.0,))
        assert np.all(out.propensities == 1.0)

    def test_bad_shares_rejected(self):
        ds = Dataset(
            features=np.ones((2, 1)), feature_names=("x",),
            actions=np.array([0, 1]), outcomes=np.ones(2),
            clusters=np.array([0, 1]), d_arms=2)
        with pytest.raises(DataError, match="sum"):
            known_propensities(ds, (0.5, 0.6))
