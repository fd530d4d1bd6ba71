"""Tests for the random forest, confidence rejection, and grid search."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fuzzyclass.corpus import FormatError, ingest
from fuzzyclass.evalsplit import UNKNOWN_LABEL, TooFewClassesError
from fuzzyclass.features import AnchorSet, build_matrix
from fuzzyclass.forest import (
    DEFAULT_THRESHOLD_SWEEP,
    DecisionTree,
    DegenerateInputError,
    GridSpec,
    HyperParams,
    TrainedClassifier,
    WidthMismatchError,
    _build_tree,
    feature_importance,
    fit,
    grid_search,
    load_model,
    save_model,
    split_score,
)
from fuzzyclass.synth import SyntheticSpec, generate_synthetic_corpus


def separable_data(n_per_class: int = 8, seed: int = 0):
    """Two clusters at opposite corners of the similarity range."""
    rng = np.random.default_rng(seed)
    hi = np.clip(rng.normal(90.0, 4.0, (n_per_class, 6)), 0.0, 100.0)
    lo = np.clip(rng.normal(10.0, 4.0, (n_per_class, 6)), 0.0, 100.0)
    hi[:, 3:] = np.clip(rng.normal(10.0, 4.0, (n_per_class, 3)), 0.0, 100.0)
    lo[:, 3:] = np.clip(rng.normal(90.0, 4.0, (n_per_class, 3)), 0.0, 100.0)
    x = np.vstack([hi, lo])
    y = ["hi"] * n_per_class + ["lo"] * n_per_class
    return x, y


def brute_force_best_split(x, y, w, n_classes, criterion, min_samples_leaf):
    """Deliberately naive scan of every (feature, midpoint) split candidate.

    Returns (score, feature, threshold) minimizing the weighted child
    impurity sum, ties to the lowest feature then threshold, or None when
    no candidate separates the rows.
    """
    n = x.shape[0]
    best = None
    for f in range(x.shape[1]):
        values = sorted(set(x[:, f]))
        for low, high in zip(values, values[1:]):
            thr = (low + high) / 2.0
            left = [i for i in range(n) if x[i, f] <= thr]
            right = [i for i in range(n) if x[i, f] > thr]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            score = 0.0
            for side in (left, right):
                weights = [0.0] * n_classes
                for i in side:
                    weights[y[i]] += w[i]
                total = sum(weights)
                probs = [c / total for c in weights]
                if criterion == "gini":
                    impurity = 1.0 - sum(p * p for p in probs)
                else:
                    impurity = -sum(p * math.log2(p) for p in probs if p > 0.0)
                score += total * impurity
            key = (score, f, thr)
            if best is None or key < best:
                best = key
    return best


@pytest.fixture(scope="module")
def anchored_training(tmp_path_factory):
    """Self-anchored training matrix over a small synthetic corpus."""
    root = tmp_path_factory.mktemp("train-tree")
    generate_synthetic_corpus(SyntheticSpec(5, 2, 2, 0.03, seed=23), root)
    corpus, _ = ingest(root)
    records = list(corpus.records)
    anchors = AnchorSet.from_records(records)
    matrix = build_matrix(records, anchors)
    labels = [r.class_label for r in records]
    return matrix, labels, anchors


class TestHyperParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_estimators": 0},
            {"criterion": "mse"},
            {"max_depth": 0},
            {"min_samples_split": 1},
            {"min_samples_leaf": 0},
            {"max_features": "half"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            HyperParams(**kwargs)

    def test_obj_round_trip(self):
        hp = HyperParams(50, "entropy", 12, 4, 2, "log2")
        assert HyperParams.from_obj(hp.to_obj()) == hp

    def test_unlimited_depth_serializes_as_none_string(self):
        hp = HyperParams(max_depth=None)
        assert hp.to_obj()["max_depth"] == "none"
        assert HyperParams.from_obj(hp.to_obj()).max_depth is None


class TestFit:
    def test_separable_training_accuracy(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=10), seed=3)
        labels = [p.label for p in model.predict(x)]
        assert labels == y

    def test_same_inputs_same_forest(self):
        x, y = separable_data()
        hp = HyperParams(n_estimators=8)
        one = fit(x, y, hp, seed=5)
        two = fit(x, y, hp, seed=5)
        assert len(one.trees) == len(two.trees) == 8
        for a, b in zip(one.trees, two.trees):
            assert np.array_equal(a.feature, b.feature)
            assert np.array_equal(a.threshold, b.threshold)
            assert np.array_equal(a.left, b.left)
            assert np.array_equal(a.right, b.right)
            assert np.array_equal(a.value, b.value)

    def test_seed_changes_forest(self):
        x, y = separable_data()
        hp = HyperParams(n_estimators=8)
        one = fit(x, y, hp, seed=5)
        two = fit(x, y, hp, seed=6)
        assert any(
            a.n_nodes != b.n_nodes or not np.array_equal(a.threshold, b.threshold)
            for a, b in zip(one.trees, two.trees)
        )

    def test_class_weight_example(self):
        x = np.arange(22, dtype=float).reshape(11, 2)
        y = ["big"] * 10 + ["small"]
        model = fit(x, y, HyperParams(n_estimators=1), seed=0)
        assert model.class_weights["big"] == Fraction(11, 20)
        assert model.class_weights["small"] == Fraction(11, 2)
        assert float(model.class_weights["big"]) == 0.55
        assert float(model.class_weights["small"]) == 5.5

    @given(st.lists(st.sampled_from("abcd"), min_size=2, max_size=24))
    @settings(max_examples=60, deadline=None)
    def test_weight_law_exact(self, y):
        assume(len(set(y)) >= 2)
        x = np.arange(len(y), dtype=float).reshape(-1, 1)
        model = fit(x, y, HyperParams(n_estimators=1), seed=0)
        k = len(set(y))
        for label, weight in model.class_weights.items():
            assert weight * y.count(label) * k == len(y)

    def test_tree_count_matches_n_estimators(self):
        x, y = separable_data(4)
        model = fit(x, y, HyperParams(n_estimators=13), seed=1)
        assert len(model.trees) == 13

    def test_empty_matrix_rejected(self):
        with pytest.raises(DegenerateInputError):
            fit(np.zeros((0, 3)), [])

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateInputError):
            fit(np.zeros((4, 2)), ["a"] * 4)

    def test_label_count_mismatch_rejected(self):
        with pytest.raises(DegenerateInputError):
            fit(np.zeros((4, 2)), ["a", "b"])

    def test_rejection_label_not_trainable(self):
        with pytest.raises(DegenerateInputError):
            fit(np.zeros((4, 2)), ["a", "a", UNKNOWN_LABEL, UNKNOWN_LABEL])


class TestDecisionTree:
    def test_leaf_distribution_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            DecisionTree(
                feature=np.asarray([-1]),
                threshold=np.asarray([0.0]),
                left=np.asarray([-1]),
                right=np.asarray([-1]),
                value=np.asarray([[0.6, 0.3]]),
            )


def leaf_only_model(distribution, classes=("a", "b")) -> TrainedClassifier:
    tree = DecisionTree(
        feature=np.asarray([-1]),
        threshold=np.asarray([0.0]),
        left=np.asarray([-1]),
        right=np.asarray([-1]),
        value=np.asarray([distribution], dtype=float),
    )
    return TrainedClassifier(
        trees=(tree,),
        classes=classes,
        class_weights={label: Fraction(1) for label in classes},
        hyperparams=HyperParams(n_estimators=1),
        seed=0,
        threshold=0.0,
        column_importances=np.zeros(1),
        n_columns=1,
    )


class TestPredict:
    def test_probabilities_sum_to_one(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=7), seed=2)
        probe = np.random.default_rng(9).uniform(0, 100, (40, 6))
        probs = model.predict_proba(probe)
        assert probs.shape == (40, 2)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_single_row_shape(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=3), seed=2)
        single = model.predict_proba(x[0])
        assert single.shape == (2,)
        prediction = model.predict(x[0])
        assert prediction.label in ("hi", "lo")

    def test_pure_leaf_single_tree(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=1, max_features="all"), seed=4)
        probs = model.predict_proba(x)
        assert np.isin(probs, (0.0, 1.0)).all()

    def test_threshold_zero_never_rejects(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=5), seed=1)
        probe = np.random.default_rng(3).uniform(0, 100, (30, 6))
        assert all(p.label != UNKNOWN_LABEL for p in model.predict(probe, threshold=0.0))

    def test_threshold_one_rejects_mixed_leaves(self):
        # identical rows with conflicting labels force mixed distributions
        x = np.tile(np.asarray([[50.0, 50.0]]), (6, 1))
        y = ["a", "b", "a", "b", "a", "b"]
        model = fit(x, y, HyperParams(n_estimators=4), seed=0)
        prediction = model.predict(x[0], threshold=1.0)
        assert prediction.label == UNKNOWN_LABEL
        assert prediction.confidence < 1.0

    def test_rejection_monotone_in_threshold(self):
        x, y = separable_data(6, seed=8)
        model = fit(x, y, HyperParams(n_estimators=9), seed=8)
        probe = np.random.default_rng(17).uniform(0, 100, (60, 6))
        previous: set[int] = set()
        for step in range(21):
            threshold = step * 0.05
            rejected = {
                i for i, p in enumerate(model.predict(probe, threshold=threshold))
                if p.label == UNKNOWN_LABEL
            }
            assert rejected >= previous
            previous = rejected

    def test_exact_tie_takes_first_class(self):
        model = leaf_only_model([0.5, 0.5])
        prediction = model.predict(np.zeros(1))
        assert prediction.label == "a"
        assert prediction.confidence == 0.5

    def test_confidence_below_threshold_rejects(self):
        model = leaf_only_model([0.5, 0.5])
        assert model.predict(np.zeros(1), threshold=0.6).label == UNKNOWN_LABEL

    def test_width_mismatch(self):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=2), seed=1)
        with pytest.raises(WidthMismatchError):
            model.predict_proba(np.zeros(5))


class TestSplitOracle:
    @given(
        data=st.data(),
        criterion=st.sampled_from(["gini", "entropy"]),
    )
    @settings(max_examples=120, deadline=None)
    def test_root_split_matches_exhaustive_scan(self, data, criterion):
        n = data.draw(st.integers(2, 12))
        n_features = data.draw(st.integers(1, 3))
        rows = data.draw(
            st.lists(
                st.lists(st.integers(0, 5), min_size=n_features, max_size=n_features),
                min_size=n,
                max_size=n,
            )
        )
        labels = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
        assume(len(set(labels)) >= 2)
        x = np.asarray(rows, dtype=float)
        y = np.asarray(labels, dtype=np.intp)
        w = np.ones(n)
        hp = HyperParams(n_estimators=1, criterion=criterion, max_features="all")
        tree = _build_tree(x, y, w, 3, hp, np.random.default_rng(0), np.zeros(n_features))
        oracle = brute_force_best_split(x, y, w, 3, criterion, hp.min_samples_leaf)
        if oracle is None:
            assert tree.feature[0] == -1
            return
        assert tree.feature[0] >= 0
        chosen = split_score(
            x, y, w, np.arange(n), 3, criterion, int(tree.feature[0]), float(tree.threshold[0])
        )
        assert chosen == pytest.approx(oracle[0], abs=1e-9)
        distinct = sorted(set(x[:, tree.feature[0]]))
        midpoints = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
        assert float(tree.threshold[0]) in midpoints

    def test_feature_tie_takes_lowest_index(self):
        # both columns induce the identical partition; index 0 must win
        x = np.asarray([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
        y = np.asarray([0, 1, 0, 1], dtype=np.intp)
        hp = HyperParams(n_estimators=1, max_features="all")
        tree = _build_tree(x, y, np.ones(4), 2, hp, np.random.default_rng(0), np.zeros(2))
        assert tree.feature[0] == 0

    def test_threshold_tie_takes_lowest(self):
        # both midpoints score 1.0 under gini; 0.5 must win over 1.5
        x = np.asarray([[0.0], [1.0], [2.0]])
        y = np.asarray([0, 1, 0], dtype=np.intp)
        hp = HyperParams(n_estimators=1, max_features="all")
        tree = _build_tree(x, y, np.ones(3), 2, hp, np.random.default_rng(0), np.zeros(1))
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 0.5


class TestGridSpec:
    def test_default_threshold_sweep(self):
        assert DEFAULT_THRESHOLD_SWEEP[0] == 0.0
        assert DEFAULT_THRESHOLD_SWEEP[-1] == 0.9
        assert len(DEFAULT_THRESHOLD_SWEEP) == 19

    def test_configs_cover_product(self):
        grid = GridSpec()
        assert len(grid.configs()) == 2 * 2 * 2 * 2 * 2 * 1

    def test_from_obj_round_trip_fields(self):
        grid = GridSpec.from_obj(
            {"n_estimators": [25], "max_depth": ["none", 8], "thresholds": [0.0, 0.5]}
        )
        assert grid.n_estimators == (25,)
        assert grid.max_depth == (None, 8)
        assert grid.thresholds == (0.0, 0.5)
        assert grid.criterion == ("gini", "entropy")

    def test_from_obj_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="bootstrap"):
            GridSpec.from_obj({"bootstrap": [True]})

    def test_from_obj_rejects_non_list(self):
        with pytest.raises(ValueError):
            GridSpec.from_obj({"n_estimators": 100})

    def test_from_obj_rejects_empty_list(self):
        with pytest.raises(ValueError):
            GridSpec.from_obj({"criterion": []})


class TestGridSearch:
    def test_selects_nonzero_threshold_on_separable_corpus(self, anchored_training):
        matrix, labels, _ = anchored_training
        grid = GridSpec.from_obj(
            {
                "n_estimators": [25], "criterion": ["gini"], "max_depth": ["none"],
                "min_samples_split": [2], "min_samples_leaf": [1],
                "thresholds": [0.0, 0.5],
            }
        )
        result = grid_search(matrix, labels, grid, seed=2)
        assert result.best_threshold > 0.0
        assert len(result.pseudo_unknown_classes) == 1
        assert len(result.curve) == 2

    def test_deterministic_rerun(self, anchored_training):
        matrix, labels, _ = anchored_training
        grid = GridSpec.from_obj(
            {
                "n_estimators": [20], "criterion": ["gini"], "max_depth": ["none"],
                "min_samples_split": [2], "min_samples_leaf": [1],
                "thresholds": [0.0, 0.3, 0.6],
            }
        )
        one = grid_search(matrix, labels, grid, seed=2)
        two = grid_search(matrix, labels, grid, seed=2)
        assert one.best_params == two.best_params
        assert one.best_threshold == two.best_threshold
        assert one.curve == two.curve
        assert one.all_scores == two.all_scores

    def test_combined_tie_takes_lowest_threshold(self, anchored_training):
        # with 4 inner classes every confidence is at least 0.25, so the
        # predictions (and scores) at thresholds 0.0 and 0.05 are identical
        matrix, labels, _ = anchored_training
        grid = GridSpec.from_obj(
            {
                "n_estimators": [15], "criterion": ["gini"], "max_depth": ["none"],
                "min_samples_split": [2], "min_samples_leaf": [1],
                "thresholds": [0.0, 0.05],
            }
        )
        result = grid_search(matrix, labels, grid, seed=4)
        assert result.curve[0].combined == result.curve[1].combined
        assert result.best_threshold == 0.0

    def test_too_few_classes(self):
        x = np.zeros((6, 18))
        y = ["a", "a", "b", "b", "c", "c"]
        with pytest.raises(TooFewClassesError, match="have 3"):
            grid_search(x, y, GridSpec(), seed=0)

    def test_requires_self_anchored_width(self):
        x = np.zeros((8, 10))
        y = ["a", "b", "c", "d"] * 2
        with pytest.raises(WidthMismatchError):
            grid_search(x, y, GridSpec(), seed=0)


class TestImportance:
    def test_per_type_aggregate_sums_to_one(self, anchored_training):
        matrix, labels, anchors = anchored_training
        model = fit(matrix, labels, HyperParams(n_estimators=20), seed=3, anchors=anchors)
        columns, by_type = feature_importance(model)
        assert columns.shape == (matrix.values.shape[1],)
        assert sum(by_type.values()) == pytest.approx(1.0, abs=1e-9)
        assert set(by_type) == {"file", "strings", "symbols"}

    def test_returns_a_copy(self, anchored_training):
        matrix, labels, _ = anchored_training
        model = fit(matrix, labels, HyperParams(n_estimators=5), seed=3)
        columns, _ = feature_importance(model)
        columns[:] = -1.0
        assert (model.column_importances >= 0).all()


class TestPersistence:
    def test_round_trip_predictions_identical(self, tmp_path):
        x, y = separable_data()
        model = fit(x, y, HyperParams(n_estimators=6), seed=9, threshold=0.4)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.classes == model.classes
        assert loaded.class_weights == model.class_weights
        assert loaded.hyperparams == model.hyperparams
        assert loaded.threshold == model.threshold
        assert loaded.seed == model.seed
        probe = np.random.default_rng(1).uniform(0, 100, (25, 6))
        assert np.array_equal(loaded.predict_proba(probe), model.predict_proba(probe))

    def test_resave_is_byte_identical(self, tmp_path):
        x, y = separable_data(5)
        model = fit(x, y, HyperParams(n_estimators=4), seed=2)
        first = tmp_path / "one.json"
        second = tmp_path / "two.json"
        save_model(model, first)
        save_model(load_model(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_anchors_round_trip(self, anchored_training, tmp_path):
        matrix, labels, anchors = anchored_training
        model = fit(matrix, labels, HyperParams(n_estimators=3), seed=1, anchors=anchors)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.anchors is not None
        assert loaded.anchors.anchors == anchors.anchors

    def test_unknown_tag_named(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format": "fuzzyclass-model v2"}')
        with pytest.raises(FormatError, match="fuzzyclass-model v2"):
            load_model(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format": "fuzzyclass-model v1", "trees": [')
        with pytest.raises(FormatError):
            load_model(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "model.json"
        obj = {"format": "fuzzyclass-model v1", "seed": 0}
        path.write_text(json.dumps(obj))
        with pytest.raises(FormatError):
            load_model(path)
