"""Fuzzy-hash based application classification toolkit.

The package turns executables into triples of context-triggered piecewise
hashes (whole file, printable strings, global text symbols), compares them
with an edit-distance similarity score, and trains a random forest over
anchor-similarity features to assign application classes, rejecting
low-confidence inputs as unknown.
"""

from .binfeat import (
    BinaryInfo,
    FeatureTriple,
    extract_strings,
    extract_symbols,
    featurize,
    inspect_binary,
)
from .corpus import (
    Corpus,
    EmptyCorpusError,
    FormatError,
    Provenance,
    SampleRecord,
    SkipEntry,
    ingest,
    load_corpus,
    save_corpus,
)
from .ctph import (
    DigestParseError,
    FuzzyHash,
    compare,
    digest,
    osa_distance,
    parse,
    render,
)
from .elf import MalformedElfError, NotElfError, StrippedError, parse_elf
from .evalsplit import (
    Averages,
    ClassMetrics,
    EvaluationReport,
    LengthMismatchError,
    SplitPlan,
    TooFewClassesError,
    UNKNOWN_LABEL,
    classification_report,
    load_split_plan,
    precision_recall_f1,
    render_report_records,
    render_report_text,
    save_split_plan,
    two_phase_split,
)
from .features import AnchorSet, FeatureMatrix, build_matrix, build_row, per_type_importance
from .forest import (
    DegenerateInputError,
    GridSearchResult,
    GridSpec,
    HyperParams,
    Prediction,
    TrainedClassifier,
    WidthMismatchError,
    feature_importance,
    fit,
    grid_search,
    load_model,
    save_model,
)
from .synth import SyntheticSpec, build_elf, generate_synthetic_corpus

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "Averages",
    "BinaryInfo",
    "ClassMetrics",
    "Corpus",
    "DegenerateInputError",
    "DigestParseError",
    "EmptyCorpusError",
    "EvaluationReport",
    "FeatureMatrix",
    "FeatureTriple",
    "FormatError",
    "FuzzyHash",
    "GridSearchResult",
    "GridSpec",
    "HyperParams",
    "LengthMismatchError",
    "MalformedElfError",
    "NotElfError",
    "Prediction",
    "Provenance",
    "SampleRecord",
    "SkipEntry",
    "SplitPlan",
    "StrippedError",
    "SyntheticSpec",
    "TooFewClassesError",
    "TrainedClassifier",
    "UNKNOWN_LABEL",
    "WidthMismatchError",
    "build_elf",
    "build_matrix",
    "build_row",
    "classification_report",
    "compare",
    "digest",
    "extract_strings",
    "extract_symbols",
    "feature_importance",
    "featurize",
    "fit",
    "generate_synthetic_corpus",
    "grid_search",
    "ingest",
    "inspect_binary",
    "load_corpus",
    "load_model",
    "load_split_plan",
    "osa_distance",
    "parse",
    "parse_elf",
    "per_type_importance",
    "precision_recall_f1",
    "render",
    "render_report_records",
    "render_report_text",
    "save_corpus",
    "save_model",
    "save_split_plan",
    "two_phase_split",
]
