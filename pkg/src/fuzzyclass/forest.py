"""From-scratch random forest over fuzzy-hash similarity features.

Each tree is fit on a bootstrap resample of size N drawn from a per-tree
RNG substream (PCG64 seeded with [seed, 1, tree_index], so results never
depend on scheduling). Splits greedily minimize weighted impurity; sample
weights are balanced class weights w_c = N / (K * n_c), kept as exact
rationals. Prediction averages the leaf distributions of all trees, and a
confidence threshold turns low-confidence predictions into the rejection
label "-1".
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import FormatError, SampleRecord, record_from_obj, record_to_obj
from .evalsplit import (
    TooFewClassesError,
    UNKNOWN_LABEL,
    classification_report,
    test_count,
)
from .features import AnchorSet, FeatureMatrix, per_type_importance

MODEL_FORMAT_TAG = "fuzzyclass-model v1"

CRITERIA = ("gini", "entropy")
MAX_FEATURES_MODES = ("sqrt", "log2", "all")

DEFAULT_THRESHOLD_SWEEP = tuple(round(0.05 * i, 2) for i in range(19))

PSEUDO_UNKNOWN_CLASS_FRAC = 0.20
VALIDATION_SAMPLE_FRAC = 0.25


class DegenerateInputError(ValueError):
    """Training input unusable: too few rows, columns, or classes."""


class WidthMismatchError(ValueError):
    """Feature row width differs from the training width."""


@dataclass(frozen=True, slots=True)
class HyperParams:
    """The tuned forest parameters. max_depth None means unlimited and is
    serialized as the literal string "none"."""

    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str = "sqrt"

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be at least 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1 or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if self.max_features not in MAX_FEATURES_MODES:
            raise ValueError(f"max_features must be one of {MAX_FEATURES_MODES}")

    def to_obj(self) -> dict[str, object]:
        return {
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "max_depth": "none" if self.max_depth is None else self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
        }

    @classmethod
    def from_obj(cls, obj: dict[str, object]) -> "HyperParams":
        depth = obj["max_depth"]
        return cls(
            n_estimators=int(obj["n_estimators"]),  # type: ignore[arg-type]
            criterion=str(obj["criterion"]),
            max_depth=None if depth in ("none", None) else int(depth),  # type: ignore[arg-type]
            min_samples_split=int(obj["min_samples_split"]),  # type: ignore[arg-type]
            min_samples_leaf=int(obj["min_samples_leaf"]),  # type: ignore[arg-type]
            max_features=str(obj["max_features"]),
        )


def _impurity(probs: np.ndarray, criterion: str) -> np.ndarray:
    """Row-wise impurity of probability vectors (last axis)."""
    if criterion == "gini":
        return 1.0 - np.square(probs).sum(axis=-1)
    logs = np.zeros_like(probs)
    np.log2(probs, out=logs, where=probs > 0.0)
    return -(probs * logs).sum(axis=-1)


def _n_candidate_features(n_columns: int, mode: str) -> int:
    if mode == "sqrt":
        return max(1, int(math.sqrt(n_columns)))
    if mode == "log2":
        return max(1, int(math.log2(n_columns))) if n_columns > 1 else 1
    return n_columns


@dataclass(frozen=True)
class DecisionTree:
    """Flat node arrays: feature[i] is -1 at leaves, where value[i] holds
    the weight-normalized class distribution."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self) -> None:
        leaves = self.feature < 0
        sums = self.value[leaves].sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValueError("leaf distributions must sum to 1")

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict_rows(self, x: np.ndarray) -> np.ndarray:
        """Leaf class distribution reached by each row."""
        node = np.zeros(x.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_obj(self) -> dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_obj(cls, obj: dict[str, list]) -> "DecisionTree":
        return cls(
            feature=np.asarray(obj["feature"], dtype=np.intp),
            threshold=np.asarray(obj["threshold"], dtype=np.float64),
            left=np.asarray(obj["left"], dtype=np.intp),
            right=np.asarray(obj["right"], dtype=np.intp),
            value=np.asarray(obj["value"], dtype=np.float64),
        )


def split_score(
    x: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    idx: np.ndarray,
    n_classes: int,
    criterion: str,
    f: int,
    thr: float,
) -> float:
    """Canonical weighted child impurity sum of one (feature, threshold)
    candidate, computed per child in row order."""
    mask = x[idx, f] <= thr
    score = 0.0
    for side in (mask, ~mask):
        cw = np.bincount(y[idx][side], weights=w[idx][side], minlength=n_classes)
        total = cw.sum()
        score += float(total * _impurity(cw / total, criterion))
    return score


def _best_split(
    x: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    idx: np.ndarray,
    candidates: np.ndarray,
    n_classes: int,
    criterion: str,
    min_samples_leaf: int,
) -> tuple[int, float, float] | None:
    """Lowest weighted-child-impurity (feature, threshold) over the given
    candidate columns; ties go to the lowest feature index, then the lowest
    threshold. Returns (feature, threshold, weighted child impurity sum).

    A fast vectorized scan shortlists near-minimal candidates, which are
    then rescored with the canonical per-candidate formula so that exact
    ties resolve independently of the scan's float accumulation order.
    """
    n = idx.size
    shortlist: list[tuple[float, int, float]] = []
    approx_min = np.inf
    for f in np.sort(candidates):
        v = x[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        boundaries = np.flatnonzero(vs[:-1] != vs[1:])
        left_counts = boundaries + 1
        ok = (left_counts >= min_samples_leaf) & (n - left_counts >= min_samples_leaf)
        boundaries = boundaries[ok]
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), y[idx][order]] = w[idx][order]
        cum = np.cumsum(onehot, axis=0)
        total = cum[-1]
        left_w = cum[boundaries]
        right_w = total - left_w
        wl = left_w.sum(axis=1)
        wr = right_w.sum(axis=1)
        child_sum = wl * _impurity(left_w / wl[:, None], criterion)
        child_sum += wr * _impurity(right_w / wr[:, None], criterion)
        approx_min = min(approx_min, float(child_sum.min()))
        cutoff = approx_min + 1e-9 * (1.0 + abs(approx_min))
        thresholds = (vs[boundaries] + vs[boundaries + 1]) / 2.0
        near = np.flatnonzero(child_sum <= cutoff)
        shortlist.extend((float(child_sum[j]), int(f), float(thresholds[j])) for j in near)
    if not shortlist:
        return None
    cutoff = approx_min + 1e-9 * (1.0 + abs(approx_min))
    best: tuple[float, int, float] | None = None
    for approx, f, thr in shortlist:
        if approx > cutoff:
            continue
        key = (split_score(x, y, w, idx, n_classes, criterion, f, thr), f, thr)
        if best is None or key < best:
            best = key
    score, f, thr = best
    return f, thr, score


def _build_tree(
    x: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    n_classes: int,
    hp: HyperParams,
    rng: np.random.Generator,
    importances: np.ndarray,
) -> DecisionTree:
    """Grow one tree on the given (already bootstrapped) sample arrays,
    accumulating impurity decreases into importances."""
    n_columns = x.shape[1]
    n_subset = _n_candidate_features(n_columns, hp.max_features)
    total_weight = w.sum()

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.zeros(n_classes))
        return len(feature) - 1

    stack: list[tuple[np.ndarray, int, int]] = [(np.arange(x.shape[0]), 0, new_node())]
    while stack:
        idx, depth, nid = stack.pop()
        class_w = np.bincount(y[idx], weights=w[idx], minlength=n_classes)
        node_weight = class_w.sum()
        dist = class_w / node_weight

        at_depth_limit = hp.max_depth is not None and depth >= hp.max_depth
        pure = np.count_nonzero(class_w) == 1
        too_small = idx.size < hp.min_samples_split
        split = None
        if not (at_depth_limit or pure or too_small):
            if n_subset < n_columns:
                candidates = rng.choice(n_columns, size=n_subset, replace=False)
            else:
                candidates = np.arange(n_columns)
            split = _best_split(
                x, y, w, idx, candidates, n_classes, hp.criterion, hp.min_samples_leaf
            )
        if split is None:
            value[nid] = dist
            continue

        f, thr, child_impurity_sum = split
        node_impurity = float(_impurity(dist[None, :], hp.criterion)[0])
        importances[f] += (node_weight * node_impurity - child_impurity_sum) / total_weight

        go_left = x[idx, f] <= thr
        feature[nid] = f
        threshold[nid] = thr
        left_id = new_node()
        right_id = new_node()
        left[nid] = left_id
        right[nid] = right_id
        stack.append((idx[~go_left], depth + 1, right_id))
        stack.append((idx[go_left], depth + 1, left_id))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.vstack(value),
    )


@dataclass(frozen=True, slots=True)
class Prediction:
    """One sample's outcome: argmax class when confident, otherwise "-1"."""

    label: str
    probabilities: np.ndarray
    confidence: float


@dataclass(frozen=True)
class TrainedClassifier:
    """The fitted forest plus everything needed to reproduce and apply it."""

    trees: tuple[DecisionTree, ...]
    classes: tuple[str, ...]
    class_weights: dict[str, Fraction]
    hyperparams: HyperParams
    seed: int
    threshold: float
    column_importances: np.ndarray
    n_columns: int
    anchors: AnchorSet | None = None

    def _check_width(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_columns:
            raise WidthMismatchError(
                f"row width {x.shape[-1]} does not match training width {self.n_columns}"
            )
        return x

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Mean of per-tree leaf distributions; rows sum to 1."""
        x = self._check_width(x)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        probs = np.zeros((rows.shape[0], len(self.classes)))
        for tree in self.trees:
            probs += tree.predict_rows(rows)
        probs /= len(self.trees)
        return probs[0] if single else probs

    def predict(self, x: np.ndarray, threshold: float | None = None) -> Prediction | list[Prediction]:
        """Label with the argmax class when confidence reaches the
        threshold, the rejection label otherwise; ties break to the first
        class in the ordered class list."""
        thr = self.threshold if threshold is None else threshold
        probs = self.predict_proba(x)
        if probs.ndim == 1:
            return self._to_prediction(probs, thr)
        return [self._to_prediction(p, thr) for p in probs]

    def _to_prediction(self, probs: np.ndarray, thr: float) -> Prediction:
        best = int(np.argmax(probs))
        confidence = float(probs[best])
        label = self.classes[best] if confidence >= thr else UNKNOWN_LABEL
        return Prediction(label=label, probabilities=probs, confidence=confidence)


def fit(
    x: np.ndarray | FeatureMatrix,
    y: Sequence[str],
    hp: HyperParams = HyperParams(),
    seed: int = 0,
    anchors: AnchorSet | None = None,
    threshold: float = 0.0,
) -> TrainedClassifier:
    """Fit the forest: per-tree bootstrap of size N, balanced class weights,
    greedy impurity-minimizing splits over random column subsets."""
    if isinstance(x, FeatureMatrix):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DegenerateInputError("feature matrix must be 2-d and non-empty")
    n = x.shape[0]
    if len(y) != n:
        raise DegenerateInputError(f"{n} rows but {len(y)} labels")
    if n < 2:
        raise DegenerateInputError("need at least 2 training rows")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise DegenerateInputError("need at least 2 distinct classes")
    if UNKNOWN_LABEL in classes:
        raise DegenerateInputError(f"{UNKNOWN_LABEL!r} is a rejection outcome, not a trainable class")

    class_index = {label: i for i, label in enumerate(classes)}
    y_codes = np.asarray([class_index[label] for label in y], dtype=np.intp)
    counts = np.bincount(y_codes, minlength=len(classes))
    class_weights = {
        label: Fraction(n, len(classes) * int(counts[class_index[label]])) for label in classes
    }
    sample_w = np.asarray([float(class_weights[label]) for label in y])

    trees = []
    importances = np.zeros(x.shape[1])
    for tree_index in range(hp.n_estimators):
        rng = np.random.default_rng([seed, 1, tree_index])
        boot = rng.integers(0, n, size=n)
        tree_imp = np.zeros(x.shape[1])
        trees.append(
            _build_tree(x[boot], y_codes[boot], sample_w[boot], len(classes), hp, rng, tree_imp)
        )
        importances += tree_imp
    importances /= hp.n_estimators

    return TrainedClassifier(
        trees=tuple(trees),
        classes=classes,
        class_weights=class_weights,
        hyperparams=hp,
        seed=seed,
        threshold=threshold,
        column_importances=importances,
        n_columns=x.shape[1],
        anchors=anchors,
    )


def feature_importance(model: TrainedClassifier) -> tuple[np.ndarray, dict[str, float]]:
    """Per-column mean impurity decrease plus the normalized per-hash-type
    aggregate (column groups file/strings/symbols)."""
    return model.column_importances.copy(), per_type_importance(model.column_importances)


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Hyperparameter grid plus the confidence-threshold sweep."""

    n_estimators: tuple[int, ...] = (100, 200)
    criterion: tuple[str, ...] = ("gini", "entropy")
    max_depth: tuple[int | None, ...] = (None, 20)
    min_samples_split: tuple[int, ...] = (2, 5)
    min_samples_leaf: tuple[int, ...] = (1, 2)
    max_features: tuple[str, ...] = ("sqrt",)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLD_SWEEP

    def configs(self) -> list[HyperParams]:
        """Grid points in deterministic iteration order."""
        return [
            HyperParams(*combo)
            for combo in itertools.product(
                self.n_estimators,
                self.criterion,
                self.max_depth,
                self.min_samples_split,
                self.min_samples_leaf,
                self.max_features,
            )
        ]

    @classmethod
    def from_obj(cls, obj: dict[str, object]) -> "GridSpec":
        """Build from a JSON mapping; unknown keys are rejected."""
        defaults = cls()
        known = {
            "n_estimators", "criterion", "max_depth", "min_samples_split",
            "min_samples_leaf", "max_features", "thresholds",
        }
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown grid fields: {sorted(extra)}")
        def depth_value(d: object) -> int | None:
            return None if d in ("none", None) else int(d)  # type: ignore[arg-type]
        kwargs: dict[str, tuple] = {}
        for key in known:
            if key not in obj:
                continue
            values = obj[key]
            if not isinstance(values, list) or not values:
                raise ValueError(f"grid field {key} must be a non-empty list")
            if key == "max_depth":
                kwargs[key] = tuple(depth_value(v) for v in values)
            elif key == "thresholds":
                kwargs[key] = tuple(float(v) for v in values)
            elif key in ("criterion", "max_features"):
                kwargs[key] = tuple(str(v) for v in values)
            else:
                kwargs[key] = tuple(int(v) for v in values)
        return replace(defaults, **kwargs)


@dataclass(frozen=True, slots=True)
class ThresholdScore:
    threshold: float
    micro_f1: float
    macro_f1: float
    weighted_f1: float

    @property
    def combined(self) -> float:
        return self.micro_f1 + self.macro_f1 + self.weighted_f1


@dataclass(frozen=True)
class GridSearchResult:
    best_params: HyperParams
    best_threshold: float
    best_combined: float
    curve: tuple[ThresholdScore, ...]
    all_scores: tuple[tuple[HyperParams, tuple[ThresholdScore, ...]], ...]
    pseudo_unknown_classes: tuple[str, ...]


def grid_search(
    x: np.ndarray | FeatureMatrix,
    y: Sequence[str],
    grid: GridSpec = GridSpec(),
    seed: int = 0,
) -> GridSearchResult:
    """Tune hyperparameters and the confidence threshold inside the
    training set.

    Holds out 20% of the training classes as pseudo-unknown (their samples
    move to the validation fold with expected label "-1") plus a stratified
    25% of the remaining samples, then maximizes micro + macro + weighted
    f1 on that fold. Ties prefer the lowest threshold, then the earliest
    grid point. Expects the self-anchored training matrix: row i scored
    against all rows as anchors, in the same order (3 columns per anchor).
    """
    if isinstance(x, FeatureMatrix):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if len(y) != n:
        raise DegenerateInputError(f"{n} rows but {len(y)} labels")
    if x.shape[1] != 3 * n:
        raise WidthMismatchError(
            f"expected a self-anchored matrix with {3 * n} columns, got {x.shape[1]}"
        )
    classes = sorted(set(y))
    if len(classes) < 4:
        raise TooFewClassesError(
            f"grid search needs at least 4 training classes, have {len(classes)}"
        )

    rng = np.random.default_rng([seed, 2])
    n_pseudo = math.ceil(PSEUDO_UNKNOWN_CLASS_FRAC * len(classes))
    pseudo = set(rng.choice(classes, size=n_pseudo, replace=False).tolist())

    val_rows = [i for i in range(n) if y[i] in pseudo]
    train_rows = []
    for label in classes:
        if label in pseudo:
            continue
        rows = [i for i in range(n) if y[i] == label]
        n_val = test_count(len(rows), VALIDATION_SAMPLE_FRAC)
        picks = rng.choice(len(rows), size=n_val, replace=False) if n_val else []
        picked = {int(i) for i in picks}
        val_rows.extend(rows[i] for i in sorted(picked))
        train_rows.extend(rows[i] for i in range(len(rows)) if i not in picked)
    train_rows.sort()
    val_rows.sort()

    cols = np.asarray([3 * r + k for r in train_rows for k in range(3)], dtype=np.intp)
    x_inner = x[np.asarray(train_rows, dtype=np.intp)[:, None], cols]
    x_val = x[np.asarray(val_rows, dtype=np.intp)[:, None], cols]
    y_inner = [y[i] for i in train_rows]
    truth = [UNKNOWN_LABEL if y[i] in pseudo else y[i] for i in val_rows]

    best: tuple[float, float, int] | None = None
    best_params = None
    best_curve: tuple[ThresholdScore, ...] = ()
    all_scores = []
    for config_idx, hp in enumerate(grid.configs()):
        model = fit(x_inner, y_inner, hp, seed)
        probs = model.predict_proba(x_val)
        curve = []
        for threshold in grid.thresholds:
            predicted = [model._to_prediction(p, threshold).label for p in probs]
            report = classification_report(truth, predicted)
            curve.append(
                ThresholdScore(threshold, report.micro.f1, report.macro.f1, report.weighted.f1)
            )
        all_scores.append((hp, tuple(curve)))
        for score in curve:
            key = (score.combined, -score.threshold, -config_idx)
            if best is None or key > best:
                best = key
                best_params = hp
                best_threshold = score.threshold
                best_curve = tuple(curve)

    assert best_params is not None
    return GridSearchResult(
        best_params=best_params,
        best_threshold=best_threshold,
        best_combined=best[0],
        curve=best_curve,
        all_scores=tuple(all_scores),
        pseudo_unknown_classes=tuple(sorted(pseudo)),
    )


def _anchor_obj(record: SampleRecord) -> dict[str, str]:
    # anchors are identity plus digests; a source path would tie the model
    # file to one machine and break byte-for-byte reproducibility
    obj = record_to_obj(record)
    del obj["path"]
    return obj


def save_model(model: TrainedClassifier, path: Path | str) -> None:
    """Persist the forest as a single JSON document with a format tag."""
    obj = {
        "format": MODEL_FORMAT_TAG,
        "seed": model.seed,
        "threshold": model.threshold,
        "hyperparams": model.hyperparams.to_obj(),
        "classes": list(model.classes),
        "class_weights": {
            label: [w.numerator, w.denominator] for label, w in model.class_weights.items()
        },
        "n_columns": model.n_columns,
        "column_importances": model.column_importances.tolist(),
        "anchors": None if model.anchors is None else [_anchor_obj(r) for r in model.anchors.anchors],
        "trees": [tree.to_obj() for tree in model.trees],
    }
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def load_model(path: Path | str) -> TrainedClassifier:
    """Read a model file written by save_model."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed model file: {exc}") from exc
    if not isinstance(obj, dict) or "format" not in obj:
        raise FormatError("model file lacks a format tag")
    if obj["format"] != MODEL_FORMAT_TAG:
        raise FormatError(f"unsupported model format tag: {obj['format']!r}")
    try:
        anchors_obj = obj["anchors"]
        anchors = None
        if anchors_obj is not None:
            anchors = AnchorSet.from_records(
                record_from_obj(rec, where=f"anchor {i}") for i, rec in enumerate(anchors_obj)
            )
        return TrainedClassifier(
            trees=tuple(DecisionTree.from_obj(t) for t in obj["trees"]),
            classes=tuple(obj["classes"]),
            class_weights={
                label: Fraction(num, den) for label, (num, den) in obj["class_weights"].items()
            },
            hyperparams=HyperParams.from_obj(obj["hyperparams"]),
            seed=int(obj["seed"]),
            threshold=float(obj["threshold"]),
            column_importances=np.asarray(obj["column_importances"], dtype=np.float64),
            n_columns=int(obj["n_columns"]),
            anchors=anchors,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed model file: {exc!r}") from exc
