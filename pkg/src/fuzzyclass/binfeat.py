"""Feature extraction from executables: raw bytes, strings, and symbols.

Each sample contributes three fuzzy hashes: one over the raw file bytes, one
over its printable strings, and one over the global text symbols from the
static symbol table. Extraction is native; no strings/nm subprocesses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ctph import FuzzyHash, digest
from .elf import (
    MalformedElfError,
    NotElfError,
    StrippedError,
    global_text_symbol_names,
    parse_elf,
)

__all__ = [
    "DEFAULT_MIN_STRING_LEN",
    "BinaryInfo",
    "FeatureTriple",
    "MalformedElfError",
    "NotElfError",
    "StrippedError",
    "extract_strings",
    "extract_symbols",
    "featurize",
    "inspect_binary",
]

DEFAULT_MIN_STRING_LEN = 4

HASH_TYPES = ("file", "strings", "symbols")


@dataclass(frozen=True, slots=True)
class FeatureTriple:
    """The three fuzzy hashes describing one sample."""

    file_hash: FuzzyHash
    strings_hash: FuzzyHash
    symbols_hash: FuzzyHash

    def by_type(self) -> tuple[FuzzyHash, FuzzyHash, FuzzyHash]:
        """Hashes in the fixed (file, strings, symbols) order."""
        return (self.file_hash, self.strings_hash, self.symbols_hash)


@dataclass(frozen=True, slots=True)
class BinaryInfo:
    """Inspection summary used for corpus inclusion decisions."""

    is_elf: bool
    has_symtab: bool
    global_text_symbols: tuple[str, ...]
    printable_strings: tuple[str, ...]


def _printable_run_re(min_len: int) -> re.Pattern[bytes]:
    if min_len < 1:
        raise ValueError("min_len must be at least 1")
    return re.compile(rb"[\t\x20-\x7e]{%d,}" % min_len)


def extract_strings(data: bytes, min_len: int = DEFAULT_MIN_STRING_LEN) -> list[str]:
    """Maximal runs of at least min_len printable bytes, in file order.

    Printable means 0x20 through 0x7e plus tab, the same character set the
    GNU strings tool accepts by default.
    """
    return [m.group().decode("ascii") for m in _printable_run_re(min_len).finditer(data)]


def extract_symbols(data: bytes) -> list[str]:
    """Global text symbol names from the static symbol table, sorted.

    Sorted ascending byte-wise with duplicates preserved, matching the "T"
    lines of a default nm run. Raises NotElfError, StrippedError, or
    MalformedElfError when the input cannot supply a symbol table.
    """
    elf = parse_elf(data)
    if not elf.has_symtab:
        raise StrippedError("no static symbol table (.symtab); binary is stripped")
    return sorted(global_text_symbol_names(elf))


def featurize(data: bytes, min_string_len: int = DEFAULT_MIN_STRING_LEN) -> FeatureTriple:
    """Digest raw bytes, extracted strings, and extracted symbols.

    Strings and symbols are joined with single newlines (no trailing newline)
    before hashing. Propagates extraction errors for non-ELF or stripped
    inputs.
    """
    symbols = extract_symbols(data)
    strings = extract_strings(data, min_string_len)
    return FeatureTriple(
        file_hash=digest(data),
        strings_hash=digest("\n".join(strings).encode("ascii")),
        symbols_hash=digest("\n".join(symbols).encode("latin-1")),
    )


def inspect_binary(data: bytes, min_len: int = DEFAULT_MIN_STRING_LEN) -> BinaryInfo:
    """Non-raising inspection: what is this file and what could it contribute."""
    strings = tuple(extract_strings(data, min_len))
    try:
        elf = parse_elf(data)
    except (NotElfError, MalformedElfError):
        return BinaryInfo(False, False, (), strings)
    if not elf.has_symtab:
        return BinaryInfo(True, False, (), strings)
    symbols = tuple(sorted(global_text_symbol_names(elf)))
    return BinaryInfo(True, True, symbols, strings)
