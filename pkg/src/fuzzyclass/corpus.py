"""Corpus ingestion and persistence.

A corpus is built from a class/version/sample directory tree: the top-level
folder names are the application classes, each class folder holds one folder
per version, and each version folder holds that version's executables. Only
executables whose name appears in every version of the class and that are
unstripped ELF files are kept, and classes left with fewer than 3 samples
are dropped entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .binfeat import DEFAULT_MIN_STRING_LEN, FeatureTriple, featurize, inspect_binary
from .ctph import FuzzyHash, parse, render
from .elf import ELF_MAGIC, ET_DYN, ET_EXEC, MalformedElfError, NotElfError, parse_elf

FORMAT_TAG = "fuzzyclass-corpus v1"

SKIP_NOT_ELF = "not-elf"
SKIP_STRIPPED = "stripped"
SKIP_NOT_IN_ALL_VERSIONS = "not-in-all-versions"
SKIP_CLASS_TOO_SMALL = "class-too-small"

MIN_CLASS_SAMPLES = 3


class FormatError(ValueError):
    """A corpus file is malformed or carries an unknown format tag."""


class EmptyCorpusError(ValueError):
    """No samples survive the inclusion rules."""


@dataclass(frozen=True, slots=True)
class SampleRecord:
    """One executable sample: its identity within the tree and its features.

    Equality ignores source_path: the same sample ingested from a different
    location is the same record.
    """

    class_label: str
    version: str
    sample_name: str
    source_path: str = field(compare=False)
    features: FeatureTriple

    def __post_init__(self) -> None:
        if not self.class_label:
            raise ValueError("class_label must be non-empty")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.class_label, self.version, self.sample_name)


@dataclass(frozen=True, slots=True)
class SkipEntry:
    """One excluded file and the inclusion rule it failed."""

    path: str
    reason: str


@dataclass(frozen=True, slots=True)
class Provenance:
    """Free-text origin plus creation time; advisory, not persisted."""

    description: str
    created_at: str


@dataclass(frozen=True)
class Corpus:
    """Deterministically ordered sample records.

    Records are normalized to (class_label, version, sample_name) order on
    construction. Equality compares records only; provenance is metadata.
    """

    records: tuple[SampleRecord, ...]
    provenance: Provenance = field(compare=False, default=Provenance("", ""))

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.records, key=lambda r: r.key))
        object.__setattr__(self, "records", ordered)
        keys = [r.key for r in ordered]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (class, version, sample) record keys")
        for label, count in self.class_sizes().items():
            if count < MIN_CLASS_SAMPLES:
                raise ValueError(
                    f"class {label!r} has {count} samples; at least "
                    f"{MIN_CLASS_SAMPLES} are required"
                )

    def class_sizes(self) -> dict[str, int]:
        """Sample count per class label, in label order."""
        sizes: dict[str, int] = {}
        for record in self.records:
            sizes[record.class_label] = sizes.get(record.class_label, 0) + 1
        return dict(sorted(sizes.items()))

    def class_labels(self) -> list[str]:
        return sorted(self.class_sizes())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _is_candidate_executable(path: Path, data: bytes) -> bool:
    """Executable detection: exec permission bit, or ELF of type EXEC/DYN
    with an entry point."""
    if path.stat().st_mode & 0o111:
        return True
    if not data.startswith(ELF_MAGIC):
        return False
    try:
        elf = parse_elf(data)
    except (NotElfError, MalformedElfError):
        return False
    return elf.elf_type in (ET_EXEC, ET_DYN) and elf.entry != 0


def _version_candidates(version_dir: Path) -> dict[str, Path]:
    """Candidate executables by name, symlinks resolved, duplicates by
    resolved path removed (first name in sorted order wins)."""
    out: dict[str, Path] = {}
    seen: set[Path] = set()
    for entry in sorted(version_dir.iterdir()):
        if not entry.is_file():
            continue
        resolved = entry.resolve()
        if resolved in seen:
            continue
        data = resolved.read_bytes()
        if not _is_candidate_executable(resolved, data):
            continue
        seen.add(resolved)
        out[entry.name] = resolved
    return out


def ingest(
    root_dir: Path | str, min_string_len: int = DEFAULT_MIN_STRING_LEN
) -> tuple[Corpus, list[SkipEntry]]:
    """Walk a class/version/sample tree and build the filtered corpus.

    Returns the corpus plus a skip report accounting for every candidate
    executable that was excluded, with reasons not-elf, stripped,
    not-in-all-versions, or class-too-small.
    """
    root = Path(root_dir)
    if not root.exists():
        raise FileNotFoundError(f"corpus root does not exist: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"corpus root is not a directory: {root}")

    records: list[SampleRecord] = []
    skips: list[SkipEntry] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        class_label = class_dir.name
        version_dirs = sorted(p for p in class_dir.iterdir() if p.is_dir())
        if not version_dirs:
            continue
        candidates = {d.name: _version_candidates(d) for d in version_dirs}
        shared_names = set.intersection(*(set(c) for c in candidates.values()))

        kept: list[SampleRecord] = []
        class_skips: list[SkipEntry] = []
        for version, named in sorted(candidates.items()):
            for name, path in sorted(named.items()):
                if name not in shared_names:
                    class_skips.append(SkipEntry(str(path), SKIP_NOT_IN_ALL_VERSIONS))
                    continue
                data = path.read_bytes()
                info = inspect_binary(data, min_string_len)
                if not info.is_elf:
                    class_skips.append(SkipEntry(str(path), SKIP_NOT_ELF))
                    continue
                if not info.has_symtab:
                    class_skips.append(SkipEntry(str(path), SKIP_STRIPPED))
                    continue
                kept.append(
                    SampleRecord(
                        class_label=class_label,
                        version=version,
                        sample_name=name,
                        source_path=str(path),
                        features=featurize(data, min_string_len),
                    )
                )
        if len(kept) < MIN_CLASS_SAMPLES:
            class_skips.extend(SkipEntry(r.source_path, SKIP_CLASS_TOO_SMALL) for r in kept)
            kept = []
        records.extend(kept)
        skips.extend(class_skips)

    if not records:
        raise EmptyCorpusError(f"no samples survive the inclusion rules under {root}")
    corpus = Corpus(tuple(records), Provenance(f"ingested from {root}", _now()))
    return corpus, skips


_RECORD_FIELDS = ("class", "version", "sample", "path", "file", "strings", "symbols")


def record_to_obj(record: SampleRecord) -> dict[str, str]:
    """JSON-ready mapping with the record's identity and canonical digests."""
    file_d, strings_d, symbols_d = (render(h) for h in record.features.by_type())
    return {
        "class": record.class_label,
        "version": record.version,
        "sample": record.sample_name,
        "path": record.source_path,
        "file": file_d,
        "strings": strings_d,
        "symbols": symbols_d,
    }


def record_from_obj(obj: object, where: str = "record") -> SampleRecord:
    """Inverse of record_to_obj; raises FormatError on shape problems.

    "path" is optional: anchor records in model files omit it so the same
    corpus serializes identically regardless of where it was ingested.
    """
    if not isinstance(obj, dict) or set(obj) - {"path"} != set(_RECORD_FIELDS) - {"path"}:
        raise FormatError(f"{where}: record fields must be {_RECORD_FIELDS}")
    features = FeatureTriple(
        file_hash=_parse_digest(obj["file"], where),
        strings_hash=_parse_digest(obj["strings"], where),
        symbols_hash=_parse_digest(obj["symbols"], where),
    )
    return SampleRecord(
        class_label=str(obj["class"]),
        version=str(obj["version"]),
        sample_name=str(obj["sample"]),
        source_path=str(obj.get("path", "")),
        features=features,
    )


def save_corpus(corpus: Corpus, path: Path | str) -> None:
    """Write the line-delimited corpus file: a format-tag header, then one
    JSON record per line."""
    lines = [FORMAT_TAG]
    lines.extend(json.dumps(record_to_obj(r), separators=(",", ":")) for r in corpus.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_digest(text: object, where: str) -> FuzzyHash:
    if not isinstance(text, str):
        raise FormatError(f"{where}: digest field is not a string")
    try:
        return parse(text)
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def load_corpus(path: Path | str) -> Corpus:
    """Read a corpus file written by save_corpus."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty corpus file")
    if lines[0] != FORMAT_TAG:
        raise FormatError(f"unsupported corpus format tag: {lines[0]!r}")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {line_no}: malformed record: {exc}") from exc
        records.append(record_from_obj(obj, where=f"line {line_no}"))
    if not records:
        raise FormatError("corpus file contains no records")
    return Corpus(tuple(records), Provenance(f"loaded from {path}", _now()))
