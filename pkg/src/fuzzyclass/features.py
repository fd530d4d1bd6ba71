"""Similarity feature matrix construction.

A sample's feature vector is its fuzzy-hash similarity against every
training sample (the anchors), per hash type. Columns are anchor-major with
per-anchor order (file, strings, symbols), so column 3*j + k scores the
sample against anchor j on hash type k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .binfeat import HASH_TYPES, FeatureTriple
from .corpus import SampleRecord
from .ctph import compare


@dataclass(frozen=True, slots=True)
class AnchorSet:
    """Training samples a new sample is scored against, in fixed order."""

    anchors: tuple[SampleRecord, ...]

    def __post_init__(self) -> None:
        if not self.anchors:
            raise ValueError("anchors must be non-empty")
        ordered = tuple(sorted(self.anchors, key=lambda r: r.key))
        object.__setattr__(self, "anchors", ordered)

    @classmethod
    def from_records(cls, records: Iterable[SampleRecord]) -> "AnchorSet":
        return cls(tuple(records))

    def __len__(self) -> int:
        return len(self.anchors)

    def labels(self) -> list[str]:
        """Class label per anchor, in anchor order."""
        return [a.class_label for a in self.anchors]

    def column_names(self) -> list[str]:
        """One name per matrix column, anchor-major."""
        return [
            f"{a.class_label}/{a.version}/{a.sample_name}:{hash_type}"
            for a in self.anchors
            for hash_type in HASH_TYPES
        ]


@dataclass(frozen=True, slots=True)
class FeatureMatrix:
    """Similarity values in [0, 100]: one row per sample, 3 columns per anchor."""

    values: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        if self.values.shape[1] != len(self.column_names):
            raise ValueError("column_names must match the column count")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


def build_row(features: FeatureTriple, anchors: AnchorSet) -> np.ndarray:
    """Score one sample against every anchor on all three hash types."""
    sample_hashes = features.by_type()
    row = np.empty(3 * len(anchors), dtype=np.float64)
    for j, anchor in enumerate(anchors.anchors):
        anchor_hashes = anchor.features.by_type()
        for k in range(3):
            row[3 * j + k] = compare(sample_hashes[k], anchor_hashes[k])
    return row


def build_matrix(samples: Sequence[SampleRecord], anchors: AnchorSet) -> FeatureMatrix:
    """Score every sample against every anchor on all three hash types."""
    values = np.empty((len(samples), 3 * len(anchors)), dtype=np.float64)
    for i, sample in enumerate(samples):
        values[i] = build_row(sample.features, anchors)
    return FeatureMatrix(values, tuple(anchors.column_names()))


def per_type_importance(column_importances: np.ndarray) -> dict[str, float]:
    """Aggregate per-column importances into one normalized value per hash
    type by summing each type's column group."""
    if column_importances.ndim != 1 or column_importances.size % 3 != 0:
        raise ValueError("expected a flat importance array with 3 columns per anchor")
    totals = {
        hash_type: float(column_importances[k::3].sum())
        for k, hash_type in enumerate(HASH_TYPES)
    }
    grand = sum(totals.values())
    if grand <= 0.0:
        return {hash_type: 0.0 for hash_type in HASH_TYPES}
    return {hash_type: value / grand for hash_type, value in totals.items()}
