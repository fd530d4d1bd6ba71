"""Tests for anchor selection and the similarity feature matrix."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzyclass.binfeat import HASH_TYPES
from fuzzyclass.corpus import ingest
from fuzzyclass.features import AnchorSet, FeatureMatrix, build_matrix, build_row, per_type_importance
from fuzzyclass.synth import SyntheticSpec, generate_synthetic_corpus


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    root = tmp_path_factory.mktemp("tree")
    generate_synthetic_corpus(SyntheticSpec(3, 3, 2, 0.02, seed=17), root)
    corpus, _ = ingest(root)
    return list(corpus.records)


class TestAnchorSet:
    def test_sorted_regardless_of_input_order(self, records):
        shuffled = records[::-1]
        anchors = AnchorSet.from_records(shuffled)
        keys = [a.key for a in anchors.anchors]
        assert keys == sorted(keys)
        assert anchors.anchors == AnchorSet.from_records(records).anchors

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            AnchorSet(())

    def test_len_and_labels(self, records):
        anchors = AnchorSet.from_records(records)
        assert len(anchors) == len(records)
        assert anchors.labels() == [a.class_label for a in anchors.anchors]

    def test_column_names_layout(self, records):
        anchors = AnchorSet.from_records(records[:2])
        names = anchors.column_names()
        assert len(names) == 6
        first = anchors.anchors[0]
        stem = f"{first.class_label}/{first.version}/{first.sample_name}"
        assert names[:3] == [f"{stem}:file", f"{stem}:strings", f"{stem}:symbols"]


class TestBuildMatrix:
    def test_own_anchor_columns_are_100(self, records):
        anchors = AnchorSet.from_records(records)
        matrix = build_matrix(list(anchors.anchors), anchors)
        for i in range(len(records)):
            assert matrix.values[i, 3 * i : 3 * i + 3].tolist() == [100.0, 100.0, 100.0]

    def test_unrelated_class_row_is_near_zero(self, tmp_path):
        generate_synthetic_corpus(SyntheticSpec(2, 3, 2, 0.02, seed=11), tmp_path)
        corpus, _ = ingest(tmp_path)
        first, second = corpus.class_labels()
        anchors = AnchorSet.from_records(r for r in corpus.records if r.class_label == first)
        strangers = [r for r in corpus.records if r.class_label == second]
        matrix = build_matrix(strangers, anchors)
        assert matrix.values.max() < 50

    def test_row_permutation(self, records):
        anchors = AnchorSet.from_records(records)
        forward = build_matrix(records, anchors)
        backward = build_matrix(records[::-1], anchors)
        assert np.array_equal(backward.values, forward.values[::-1])

    def test_commutes_with_row_subsetting(self, records):
        anchors = AnchorSet.from_records(records)
        full = build_matrix(records, anchors)
        half = build_matrix(records[:5], anchors)
        assert np.array_equal(full.values[:5], half.values)

    def test_values_in_range_and_complete(self, records):
        anchors = AnchorSet.from_records(records)
        matrix = build_matrix(records, anchors)
        assert matrix.values.shape == (len(records), 3 * len(records))
        assert np.isfinite(matrix.values).all()
        assert matrix.values.min() >= 0 and matrix.values.max() <= 100

    def test_build_row_matches_matrix(self, records):
        anchors = AnchorSet.from_records(records)
        matrix = build_matrix(records, anchors)
        for i, record in enumerate(records):
            assert np.array_equal(build_row(record.features, anchors), matrix.values[i])

    def test_column_names_match_width(self, records):
        anchors = AnchorSet.from_records(records)
        matrix = build_matrix(records[:3], anchors)
        assert len(matrix.column_names) == matrix.n_columns == 3 * len(anchors)
        assert matrix.n_samples == 3

    def test_matrix_shape_validation(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.zeros((2, 3)), ("only", "two"))
        with pytest.raises(ValueError):
            FeatureMatrix(np.zeros(6), ("a",) * 6)


class TestPerTypeImportance:
    def test_sums_column_groups(self):
        importances = np.array([1.0, 2.0, 3.0, 3.0, 2.0, 1.0])
        assert per_type_importance(importances) == {
            "file": 4.0 / 12.0,
            "strings": 4.0 / 12.0,
            "symbols": 4.0 / 12.0,
        }

    def test_single_type_dominates(self):
        importances = np.array([0.0, 0.0, 5.0, 0.0, 0.0, 5.0])
        result = per_type_importance(importances)
        assert result == {"file": 0.0, "strings": 0.0, "symbols": 1.0}

    def test_all_zero_input(self):
        assert per_type_importance(np.zeros(9)) == {t: 0.0 for t in HASH_TYPES}

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            per_type_importance(np.zeros(7))
        with pytest.raises(ValueError):
            per_type_importance(np.zeros((2, 3)))

    @given(st.lists(st.floats(min_value=0, max_value=10), min_size=3, max_size=30).filter(
        lambda v: len(v) % 3 == 0 and sum(v) > 0
    ))
    @settings(max_examples=100, deadline=None)
    def test_normalized_partition(self, values):
        result = per_type_importance(np.asarray(values))
        assert set(result) == set(HASH_TYPES)
        assert all(v >= 0 for v in result.values())
        assert sum(result.values()) == pytest.approx(1.0)
