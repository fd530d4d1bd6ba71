"""Two-phase train/test protocol and evaluation metrics.

The split happens in two phases: a fraction of the classes becomes unknown
(all their samples go to test and their ground truth is the rejection label
"-1"), then the remaining known classes get a per-class stratified sample
split. Metrics follow the usual multi-class precision/recall/f1 definitions
with micro, macro, and weighted averaging, treating "-1" as an ordinary
label row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, FormatError

UNKNOWN_LABEL = "-1"

SPLIT_FORMAT_TAG = "fuzzyclass-split v1"

SampleId = tuple[str, str, str]


class TooFewClassesError(ValueError):
    """Not enough classes for the requested split or holdout."""


class LengthMismatchError(ValueError):
    """Truth and prediction sequences differ in length."""


@dataclass(frozen=True, slots=True)
class SplitPlan:
    """Assignment of classes to known/unknown and samples to train/test."""

    known_classes: tuple[str, ...]
    unknown_classes: tuple[str, ...]
    train_ids: tuple[SampleId, ...]
    test_ids: tuple[SampleId, ...]
    seed: int

    def __post_init__(self) -> None:
        if set(self.known_classes) & set(self.unknown_classes):
            raise ValueError("known and unknown classes must be disjoint")
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids must be disjoint")
        if any(sid[0] in self.unknown_classes for sid in self.train_ids):
            raise ValueError("unknown-class samples may not appear in train")


def test_count(n_samples: int, sample_frac: float) -> int:
    """Per-class test-set size: ceiling toward test, always leaving at
    least one training sample."""
    return min(math.ceil(sample_frac * n_samples), n_samples - 1)


def two_phase_split(
    corpus: Corpus, class_frac: float = 0.2, sample_frac: float = 0.4, seed: int = 0
) -> SplitPlan:
    """Phase one holds out ⌈class_frac·K⌉ whole classes as unknown; phase
    two splits each remaining class with ⌈sample_frac·n_c⌉ samples to test."""
    labels = corpus.class_labels()
    if len(labels) < 2:
        raise TooFewClassesError(f"need at least 2 classes, have {len(labels)}")
    if not 0.0 <= class_frac < 1.0 or not 0.0 <= sample_frac < 1.0:
        raise ValueError("fractions must lie in [0, 1)")

    rng = np.random.default_rng([seed, 3])
    n_unknown = math.ceil(class_frac * len(labels))
    unknown = sorted(rng.choice(labels, size=n_unknown, replace=False).tolist()) if n_unknown else []
    known = [c for c in labels if c not in unknown]

    train_ids: list[SampleId] = []
    test_ids: list[SampleId] = [r.key for r in corpus.records if r.class_label in unknown]
    for label in known:
        keys = [r.key for r in corpus.records if r.class_label == label]
        n_test = test_count(len(keys), sample_frac)
        picks = rng.choice(len(keys), size=n_test, replace=False) if n_test else []
        picked = {int(i) for i in picks}
        test_ids.extend(keys[i] for i in sorted(picked))
        train_ids.extend(keys[i] for i in range(len(keys)) if i not in picked)
    return SplitPlan(
        known_classes=tuple(known),
        unknown_classes=tuple(unknown),
        train_ids=tuple(sorted(train_ids)),
        test_ids=tuple(sorted(test_ids)),
        seed=seed,
    )


def split_truth_labels(plan: SplitPlan) -> dict[SampleId, str]:
    """Ground-truth label per test sample: the class for known classes, the
    rejection label for unknown-class samples."""
    return {
        sid: (UNKNOWN_LABEL if sid[0] in plan.unknown_classes else sid[0])
        for sid in plan.test_ids
    }


def save_split_plan(plan: SplitPlan, path: Path | str) -> None:
    """Persist the plan as a single JSON document with a format tag."""
    obj = {
        "format": SPLIT_FORMAT_TAG,
        "seed": plan.seed,
        "known_classes": list(plan.known_classes),
        "unknown_classes": list(plan.unknown_classes),
        "train_ids": [list(sid) for sid in plan.train_ids],
        "test_ids": [list(sid) for sid in plan.test_ids],
    }
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def _id_from_obj(value: object, where: str) -> SampleId:
    if not isinstance(value, list) or len(value) != 3 or not all(isinstance(p, str) for p in value):
        raise FormatError(f"{where} must be a [class, version, sample] triple")
    return (value[0], value[1], value[2])


def load_split_plan(path: Path | str) -> SplitPlan:
    """Read a plan written by save_split_plan."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed split plan file: {exc}") from exc
    if not isinstance(obj, dict) or "format" not in obj:
        raise FormatError("split plan file lacks a format tag")
    if obj["format"] != SPLIT_FORMAT_TAG:
        raise FormatError(f"unsupported split plan format tag: {obj['format']!r}")
    try:
        return SplitPlan(
            known_classes=tuple(str(c) for c in obj["known_classes"]),
            unknown_classes=tuple(str(c) for c in obj["unknown_classes"]),
            train_ids=tuple(
                _id_from_obj(v, f"train id {i}") for i, v in enumerate(obj["train_ids"])
            ),
            test_ids=tuple(
                _id_from_obj(v, f"test id {i}") for i, v in enumerate(obj["test_ids"])
            ),
            seed=int(obj["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed split plan file: {exc!r}") from exc


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, and their harmonic mean, with zero denominators
    mapping to 0."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True, slots=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True, slots=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True, slots=True)
class EvaluationReport:
    """Per-class rows plus micro, macro, and weighted aggregate rows."""

    rows: tuple[ClassMetrics, ...]
    micro: Averages
    macro: Averages
    weighted: Averages
    total_support: int
    zero_division_labels: tuple[str, ...]


def classification_report(truth: Sequence[str], predicted: Sequence[str]) -> EvaluationReport:
    """Score predictions against truth over the union of labels seen in
    either sequence."""
    if len(truth) != len(predicted):
        raise LengthMismatchError(
            f"truth has {len(truth)} labels, predictions have {len(predicted)}"
        )
    labels = sorted(set(truth) | set(predicted))
    rows = []
    zero_division = []
    pooled_tp = 0
    for label in labels:
        tp = sum(1 for t, p in zip(truth, predicted) if t == label and p == label)
        fp = sum(1 for t, p in zip(truth, predicted) if t != label and p == label)
        fn = sum(1 for t, p in zip(truth, predicted) if t == label and p != label)
        precision, recall, f1 = precision_recall_f1(tp, fp, fn)
        if tp + fp == 0 or tp + fn == 0:
            zero_division.append(label)
        rows.append(ClassMetrics(label, precision, recall, f1, tp + fn))
        pooled_tp += tp

    total = len(truth)
    # single-label pooling: total fp = total fn, so micro p = r = f1 = accuracy,
    # and routing through the harmonic mean would only add rounding error
    accuracy = pooled_tp / total if total else 0.0
    micro_p = micro_r = micro_f1 = accuracy
    n_labels = len(rows)
    macro = Averages(
        sum(r.precision for r in rows) / n_labels if n_labels else 0.0,
        sum(r.recall for r in rows) / n_labels if n_labels else 0.0,
        sum(r.f1 for r in rows) / n_labels if n_labels else 0.0,
    )
    weighted = Averages(
        sum(r.precision * r.support for r in rows) / total if total else 0.0,
        sum(r.recall * r.support for r in rows) / total if total else 0.0,
        sum(r.f1 * r.support for r in rows) / total if total else 0.0,
    )
    return EvaluationReport(
        rows=tuple(rows),
        micro=Averages(micro_p, micro_r, micro_f1),
        macro=macro,
        weighted=weighted,
        total_support=total,
        zero_division_labels=tuple(zero_division),
    )


def render_report_text(report: EvaluationReport) -> str:
    """Aligned table: Class, Precision, Recall, f1-Score, Support, followed
    by the micro/macro/weighted average rows."""
    headers = ("Class", "Precision", "Recall", "f1-Score", "Support")
    body: list[tuple[str, str, str, str, str]] = []
    for r in report.rows:
        body.append((r.label, f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}", str(r.support)))
    for name, avg in (("micro avg", report.micro), ("macro avg", report.macro), ("weighted avg", report.weighted)):
        body.append((name, f"{avg.precision:.2f}", f"{avg.recall:.2f}", f"{avg.f1:.2f}", str(report.total_support)))

    widths = [max(len(headers[i]), max((len(row[i]) for row in body), default=0)) for i in range(5)]
    def fmt(row: tuple[str, str, str, str, str]) -> str:
        cells = [row[0].ljust(widths[0])] + [row[i].rjust(widths[i]) for i in range(1, 5)]
        return "  ".join(cells).rstrip()

    lines = [fmt(headers), ""]
    lines.extend(fmt(row) for row in body[: len(report.rows)])
    lines.append("")
    lines.extend(fmt(row) for row in body[len(report.rows):])
    if report.zero_division_labels:
        lines.append("")
        lines.append(
            "warning: zero denominator treated as 0 for: "
            + ", ".join(report.zero_division_labels)
        )
    return "\n".join(lines)


def render_report_records(report: EvaluationReport) -> str:
    """One JSON object per line: class rows, then the three average rows."""
    lines = []
    for r in report.rows:
        lines.append(json.dumps(
            {"class": r.label, "precision": r.precision, "recall": r.recall,
             "f1": r.f1, "support": r.support},
            separators=(",", ":"),
        ))
    for name, avg in (("micro", report.micro), ("macro", report.macro), ("weighted", report.weighted)):
        lines.append(json.dumps(
            {"average": name, "precision": avg.precision, "recall": avg.recall,
             "f1": avg.f1, "support": report.total_support},
            separators=(",", ":"),
        ))
    return "\n".join(lines)
