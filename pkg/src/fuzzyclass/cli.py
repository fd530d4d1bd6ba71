"""Operator-facing command line tying the pipeline together.

One executable with subcommands: hash and compare for single digests,
ingest and gen-corpus for corpus construction, split / train / classify /
evaluate for the modeling workflow. Every command is deterministic given
its flags; commands that consume a seed echo it in their output. Exit codes:
0 success, 1 partial failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .binfeat import (
    DEFAULT_MIN_STRING_LEN,
    HASH_TYPES,
    MalformedElfError,
    NotElfError,
    StrippedError,
    featurize,
)
from .corpus import EmptyCorpusError, FormatError, ingest, load_corpus, save_corpus
from .ctph import DigestParseError, compare, parse, render
from .evalsplit import (
    TooFewClassesError,
    classification_report,
    load_split_plan,
    render_report_records,
    render_report_text,
    save_split_plan,
    split_truth_labels,
    two_phase_split,
)
from .features import AnchorSet, build_matrix, build_row
from .forest import GridSpec, fit, grid_search, load_model, save_model
from .synth import SyntheticSpec, generate_synthetic_corpus

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class RunConfig:
    """Per-invocation knobs shared by the modeling commands.

    An explicit threshold bypasses the tuned threshold wherever a model is
    applied or persisted.
    """

    seed: int = 0
    threshold: float | None = None
    min_string_len: int = DEFAULT_MIN_STRING_LEN
    grid: GridSpec | None = None

    def __post_init__(self) -> None:
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.min_string_len < 1:
            raise ValueError("min_string_len must be at least 1")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _threshold_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in [0, 1]")
    return value


def _rate_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("rate must lie in [0, 1]")
    return value


def _fraction_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie in [0, 1)")
    return value


def _samples_arg(text: str) -> int | tuple[int, int]:
    """A fixed count like "2" or an inclusive range like "1-2"."""
    try:
        if "-" in text:
            lo, hi = text.split("-", 1)
            return (int(lo), int(hi))
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("samples must be a count or LO-HI range") from None


def _load_grid(path: str) -> GridSpec:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise ValueError("grid file must hold a JSON object")
    return GridSpec.from_obj(obj)


def _sibling(path: Path, suffix: str) -> Path:
    return path.parent / (path.stem + suffix)


def cmd_hash(args: argparse.Namespace) -> int:
    """Print the file, strings, and symbols digests of one executable."""
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        return _fail(str(exc))
    try:
        triple = featurize(data, args.min_string_len)
    except (NotElfError, StrippedError, MalformedElfError) as exc:
        return _fail(f"{args.file}: {exc}")
    for hash_type, digest in zip(HASH_TYPES, triple.by_type()):
        print(f"{hash_type}: {render(digest)}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    """Print the 0-100 similarity score of two digests."""
    try:
        a = parse(args.digest_a)
        b = parse(args.digest_b)
    except DigestParseError as exc:
        return _fail(str(exc))
    print(compare(a, b))
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    """Build a corpus file from a class/version/sample directory tree."""
    try:
        corpus, skips = ingest(args.root, min_string_len=args.min_string_len)
    except (FileNotFoundError, NotADirectoryError, EmptyCorpusError) as exc:
        return _fail(str(exc))
    for skip in skips:
        print(f"skip: {skip.path} ({skip.reason})")
    save_corpus(corpus, args.out)
    print(
        f"ingested {len(corpus.records)} samples across "
        f"{len(corpus.class_labels())} classes -> {args.out}"
    )
    return EXIT_OK


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    """Generate a synthetic executable tree for desk-scale experiments."""
    try:
        spec = SyntheticSpec(
            n_classes=args.classes,
            versions_per_class=args.versions,
            samples_per_version=args.samples,
            mutation_rate=args.mutation_rate,
            seed=args.seed,
            string_churn_rate=args.string_churn_rate,
            symbol_churn_rate=args.symbol_churn_rate,
        )
    except ValueError as exc:
        return _fail(str(exc))
    generate_synthetic_corpus(spec, Path(args.out))
    print(f"seed: {args.seed}")
    print(
        f"generated {spec.n_classes} classes x {spec.versions_per_class} versions -> {args.out}"
    )
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    """Compute and persist a two-phase train/test split of a corpus."""
    try:
        corpus = load_corpus(args.corpus)
        plan = two_phase_split(
            corpus, class_frac=args.class_frac, sample_frac=args.sample_frac, seed=args.seed
        )
    except (OSError, FormatError, TooFewClassesError) as exc:
        return _fail(str(exc))
    save_split_plan(plan, args.out)
    print(f"seed: {args.seed}")
    print(
        f"split: {len(plan.known_classes)} known / {len(plan.unknown_classes)} unknown classes, "
        f"{len(plan.train_ids)} train / {len(plan.test_ids)} test samples -> {args.out}"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Split, grid-search, fit on the full training set, persist artifacts."""
    try:
        config = RunConfig(
            seed=args.seed,
            threshold=args.threshold,
            grid=_load_grid(args.grid) if args.grid else GridSpec(),
        )
    except (OSError, ValueError) as exc:
        return _fail(f"bad configuration: {exc}")
    try:
        corpus = load_corpus(args.corpus)
        plan = two_phase_split(
            corpus, class_frac=args.class_frac, sample_frac=args.sample_frac, seed=config.seed
        )
        by_key = {record.key: record for record in corpus.records}
        train_records = [by_key[sid] for sid in plan.train_ids]
        anchors = AnchorSet.from_records(train_records)
        matrix = build_matrix(train_records, anchors)
        labels = [record.class_label for record in train_records]
        result = grid_search(matrix.values, labels, grid=config.grid, seed=config.seed)
    except (OSError, FormatError, EmptyCorpusError, TooFewClassesError) as exc:
        return _fail(str(exc))

    threshold = result.best_threshold if config.threshold is None else config.threshold
    model = fit(
        matrix.values,
        labels,
        hp=result.best_params,
        seed=config.seed,
        anchors=anchors,
        threshold=threshold,
    )

    model_path = Path(args.out)
    split_path = _sibling(model_path, ".split.json")
    curve_path = _sibling(model_path, ".curve.csv")
    save_model(model, model_path)
    save_split_plan(plan, split_path)
    curve_lines = ["threshold,micro_f1,macro_f1,weighted_f1"]
    curve_lines += [
        f"{s.threshold:.2f},{s.micro_f1:.6f},{s.macro_f1:.6f},{s.weighted_f1:.6f}"
        for s in result.curve
    ]
    curve_path.write_text("\n".join(curve_lines) + "\n", encoding="utf-8")

    hp = " ".join(f"{key}={value}" for key, value in result.best_params.to_obj().items())
    source = "override" if config.threshold is not None else "tuned"
    print(f"seed: {config.seed}")
    print(
        f"split: {len(plan.known_classes)} known / {len(plan.unknown_classes)} unknown classes, "
        f"{len(plan.train_ids)} train / {len(plan.test_ids)} test samples -> {split_path}"
    )
    print(f"grid: best {hp}")
    print(f"threshold: {threshold:.2f} ({source})")
    print(f"curve: {curve_path}")
    print(f"model: {model_path}")
    return EXIT_OK


def _classify_inputs(paths: list[str]) -> tuple[list[Path], list[str]]:
    """Expand files and directory trees into one sorted file list."""
    files: list[Path] = []
    missing: list[str] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob("*") if p.is_file()))
        elif path.is_file():
            files.append(path)
        else:
            missing.append(raw)
    return files, missing


def cmd_classify(args: argparse.Namespace) -> int:
    """Label loose executables with a trained model."""
    try:
        config = RunConfig(threshold=args.threshold, min_string_len=args.min_string_len)
        model = load_model(args.model)
    except (OSError, FormatError, ValueError) as exc:
        return _fail(str(exc))
    if model.anchors is None:
        return _fail("model carries no anchor records; it cannot featurize new files")

    files, missing = _classify_inputs(args.inputs)
    failures = 0
    for raw in missing:
        print(f"error: {raw}: no such file or directory", file=sys.stderr)
        failures += 1
    if not files and missing:
        return EXIT_USAGE
    if not files:
        return _fail("no input files")

    successes = 0
    for path in files:
        try:
            data = path.read_bytes()
            triple = featurize(data, config.min_string_len)
        except (OSError, NotElfError, StrippedError, MalformedElfError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        prediction = model.predict(build_row(triple, model.anchors), threshold=config.threshold)
        print(f"{path} {prediction.label} {prediction.confidence:.4f}")
        successes += 1

    if successes == 0:
        return EXIT_USAGE
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score a trained model on the test half of a persisted split."""
    try:
        config = RunConfig(threshold=args.threshold)
        model = load_model(args.model)
        corpus = load_corpus(args.corpus)
        plan = load_split_plan(args.split)
    except (OSError, FormatError, ValueError) as exc:
        return _fail(str(exc))

    if model.anchors is None:
        return _fail("model carries no anchor records; it cannot featurize new files")
    by_key = {record.key: record for record in corpus.records}
    missing = [sid for sid in plan.train_ids + plan.test_ids if sid not in by_key]
    if missing:
        return _fail(f"split plan references {len(missing)} samples missing from the corpus")
    anchor_keys = tuple(record.key for record in model.anchors.anchors)
    if anchor_keys != plan.train_ids:
        return _fail("model anchors do not match the split plan training set")
    stale = [record.key for record in model.anchors.anchors if by_key[record.key] != record]
    if stale:
        return _fail(f"{len(stale)} anchor records differ from the corpus records")

    test_records = [by_key[sid] for sid in plan.test_ids]
    matrix = build_matrix(test_records, model.anchors)
    predictions = model.predict(matrix.values, threshold=config.threshold)
    truth_by_id = split_truth_labels(plan)
    truth = [truth_by_id[sid] for sid in plan.test_ids]
    report = classification_report(truth, [p.label for p in predictions])

    rendered = render_report_text(report) if args.format == "text" else render_report_records(report)
    if args.out:
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
        print(f"report -> {args.out}")
    else:
        print(rendered)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzyclass",
        description="Classify executables by fuzzy-hash similarity features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hash", help="print the three feature digests of one executable")
    p.add_argument("file")
    p.add_argument("--min-string-len", type=int, default=DEFAULT_MIN_STRING_LEN)
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("compare", help="score two digests")
    p.add_argument("digest_a")
    p.add_argument("digest_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ingest", help="build a corpus file from a directory tree")
    p.add_argument("root")
    p.add_argument("--out", default="corpus.fzc")
    p.add_argument("--min-string-len", type=int, default=DEFAULT_MIN_STRING_LEN)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-corpus", help="generate a synthetic executable tree")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--versions", type=int, required=True)
    p.add_argument("--samples", type=_samples_arg, required=True,
                   help="samples per version: a count or an inclusive LO-HI range")
    p.add_argument("--mutation-rate", type=_rate_arg, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--string-churn-rate", type=_rate_arg, default=None)
    p.add_argument("--symbol-churn-rate", type=_rate_arg, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("split", help="persist a two-phase train/test split")
    p.add_argument("corpus")
    p.add_argument("--class-frac", type=_fraction_arg, default=0.2)
    p.add_argument("--sample-frac", type=_fraction_arg, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="split.json")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="split, grid-search, and fit a model")
    p.add_argument("corpus")
    p.add_argument("--class-frac", type=_fraction_arg, default=0.2)
    p.add_argument("--sample-frac", type=_fraction_arg, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", default=None, help="JSON file of grid overrides")
    p.add_argument("--threshold", type=_threshold_arg, default=None,
                   help="bypass the tuned confidence threshold")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label executables with a trained model")
    p.add_argument("model")
    p.add_argument("inputs", nargs="+", help="executable files or directories")
    p.add_argument("--threshold", type=_threshold_arg, default=None)
    p.add_argument("--min-string-len", type=int, default=DEFAULT_MIN_STRING_LEN)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="report model quality on a persisted split")
    p.add_argument("model")
    p.add_argument("corpus")
    p.add_argument("split")
    p.add_argument("--threshold", type=_threshold_arg, default=None)
    p.add_argument("--format", choices=("text", "records"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
