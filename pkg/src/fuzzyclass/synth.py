"""Synthetic corpus generation: small valid ELF files in a class tree.

Builds unstripped ELF executables entirely from scratch so desk-scale
experiments never depend on a private executable corpus. Classes get
independent random bases; versions inside a class are light mutations of the
class base (payload byte flips plus bounded contiguous churn of strings and
symbols), so within-class similarity stays above cross-class similarity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .elf import ET_EXEC

_EM_X86_64 = 62
_EM_386 = 3

_TEXT_VADDR = 0x401000


def build_elf(
    code: bytes,
    strings: list[str],
    symbol_names: list[str],
    *,
    is_64: bool = True,
    little_endian: bool = True,
    with_symtab: bool = True,
    elf_type: int = ET_EXEC,
) -> bytes:
    """Assemble a minimal valid ELF image from payload parts.

    The image carries .text (the code bytes), .rodata (NUL-separated string
    payload), and, unless with_symtab is False, a .symtab defining one global
    function symbol per name, in the order given.
    """
    endian = "<" if little_endian else ">"
    rodata = b"\x00".join(s.encode("ascii") for s in strings) + b"\x00"

    if is_64:
        ehsize, shentsize, symentsize = 64, 64, 24
        header_fmt = endian + "HHIQQQIHHHHHH"
        sh_fmt = endian + "IIQQQQIIQQ"
        sym_fmt = endian + "IBBHQQ"
    else:
        ehsize, shentsize, symentsize = 52, 40, 16
        header_fmt = endian + "HHIIIIIHHHHHH"
        sh_fmt = endian + "IIIIIIIIII"
        sym_fmt = endian + "IIIBBH"

    def pad(offset: int, align: int) -> int:
        return (offset + align - 1) // align * align

    text_off = pad(ehsize, 16)
    rodata_off = text_off + len(code)

    # symbol string table: NUL, then each name NUL-terminated
    strtab = bytearray(b"\x00")
    name_offsets = []
    for name in symbol_names:
        name_offsets.append(len(strtab))
        strtab += name.encode("ascii") + b"\x00"

    symtab = bytearray()
    if with_symtab:
        if is_64:
            symtab += struct.pack(sym_fmt, 0, 0, 0, 0, 0, 0)
        else:
            symtab += struct.pack(sym_fmt, 0, 0, 0, 0, 0, 0)
        step = max(len(code) // max(len(symbol_names), 1), 1)
        for i, name_off in enumerate(name_offsets):
            st_info = (1 << 4) | 2  # global binding, function type
            value = _TEXT_VADDR + (i * step) % max(len(code), 1)
            if is_64:
                symtab += struct.pack(sym_fmt, name_off, st_info, 0, 1, value, 8)
            else:
                symtab += struct.pack(sym_fmt, name_off, value, 8, st_info, 0, 1)

    section_names = [".text", ".rodata", ".symtab", ".strtab", ".shstrtab"]
    shstrtab = bytearray(b"\x00")
    section_name_offsets = []
    for name in section_names:
        section_name_offsets.append(len(shstrtab))
        shstrtab += name.encode("ascii") + b"\x00"

    symtab_off = pad(rodata_off + len(rodata), 8)
    strtab_off = symtab_off + len(symtab)
    shstrtab_off = strtab_off + len(strtab)
    shoff = pad(shstrtab_off + len(shstrtab), 8)

    # index: 0 null, 1 .text, 2 .rodata, 3 .symtab, 4 .strtab, 5 .shstrtab
    sections = [
        (0, 0, 0, 0, 0, 0, 0, 0, 0, 0),
        (section_name_offsets[0], 1, 0x2 | 0x4, _TEXT_VADDR, text_off, len(code), 0, 0, 16, 0),
        (section_name_offsets[1], 1, 0x2, _TEXT_VADDR + 0x1000, rodata_off, len(rodata), 0, 0, 1, 0),
        (section_name_offsets[2], 2, 0, 0, symtab_off, len(symtab), 4, 1, 8, symentsize),
        (section_name_offsets[3], 3, 0, 0, strtab_off, len(strtab), 0, 0, 1, 0),
        (section_name_offsets[4], 3, 0, 0, shstrtab_off, len(shstrtab), 0, 0, 1, 0),
    ]
    if not with_symtab:
        # keep layout, but mark the slot as a plain string table so no
        # static symbol table exists
        name_off, _, _, addr, off, _, _, _, align, _ = sections[3]
        sections[3] = (name_off, 3, 0, addr, off, 0, 0, 0, align, 0)

    header = struct.pack(
        header_fmt,
        elf_type,
        _EM_X86_64 if is_64 else _EM_386,
        1,
        _TEXT_VADDR,
        0,
        shoff,
        0,
        ehsize,
        0,
        0,
        shentsize,
        len(sections),
        5,
    )
    ident = b"\x7fELF" + bytes([2 if is_64 else 1, 1 if little_endian else 2, 1]) + b"\x00" * 9

    out = bytearray(ident + header)
    out += b"\x00" * (text_off - len(out))
    out += code
    out += rodata
    out += b"\x00" * (symtab_off - len(out))
    out += symtab
    out += strtab
    out += shstrtab
    out += b"\x00" * (shoff - len(out))
    for fields in sections:
        out += struct.pack(sh_fmt, *fields)
    return bytes(out)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a generated corpus tree.

    samples_per_version may be a fixed count or an inclusive (low, high)
    range; the per-class count is drawn once so every version of a class
    contains the same sample names. string_churn_rate and symbol_churn_rate
    default to mutation_rate; setting symbol_churn_rate to 0 makes the
    symbol feature perfectly stable inside every class.
    """

    n_classes: int
    versions_per_class: int
    samples_per_version: int | tuple[int, int]
    mutation_rate: float
    seed: int
    string_churn_rate: float | None = None
    symbol_churn_rate: float | None = None

    def __post_init__(self) -> None:
        if self.n_classes < 1 or self.versions_per_class < 1:
            raise ValueError("counts must be at least 1")
        lo, hi = self.sample_range()
        if lo < 1 or hi < lo:
            raise ValueError("samples_per_version must be a positive count or range")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")

    def sample_range(self) -> tuple[int, int]:
        if isinstance(self.samples_per_version, int):
            return self.samples_per_version, self.samples_per_version
        lo, hi = self.samples_per_version
        return int(lo), int(hi)


_NOUNS = [
    "mesh", "lattice", "vector", "tensor", "kernel", "solver", "graph",
    "brook", "cedar", "dune", "ember", "flint", "grove", "heron",
    "iris", "jade", "krill", "lark", "moss", "nova", "opal", "pine",
    "quill", "reed", "sage", "teal", "umber", "vale", "wren", "yarrow",
]
_VERBS = [
    "align", "assemble", "balance", "collect", "decode", "emit", "fold",
    "gather", "hash", "index", "join", "kindle", "load", "merge",
    "normalize", "order", "pack", "query", "reduce", "scan", "trace",
    "update", "verify", "walk", "expand", "filter",
]
_TOOL_SUFFIXES = ["run", "ctl", "prep", "view", "stat", "sync"]

# toolchain-style names and boilerplate shared across classes, so that
# cross-class similarity is low but not zero, as in real executables.
# Underscore prefixes make the shared names sort into one contiguous block
# ahead of the lowercase class-specific names; classes take nested prefixes
# of these pools, so any two classes share a contiguous identical run long
# enough to register in chunked fuzzy hashes.
_COMMON_SYMBOLS = sorted([
    "_start", "_init", "_fini", "_libc_csu_init", "_libc_csu_fini",
    "_io_flush_all", "_exit_cleanup", "_signal_dispatch", "_runtime_assert",
    "_profile_begin", "_profile_end", "_mem_guard_check", "_tls_setup",
    "_dl_init_hook", "_stack_guard_init", "_atexit_register",
])
_COMMON_PHRASES = [
    "usage: %s [options] <input file> [<input file> ...]",
    "error: cannot open configuration file, using built-in defaults",
    "error: out of memory while allocating working buffers",
    "error: invalid argument combination, see --help for details",
    "warning: option is deprecated and will be removed in a later release",
    "interrupted by signal, flushing buffers and shutting down",
    "writing output to %s (append mode %d, compression level %d)",
    "reading configuration from %s (format version %d)",
    "operation completed successfully in %.2f seconds",
    "permission denied while opening %s for writing",
    "unexpected end of input at line %d, column %d",
    "retrying after transient failure (%d of %d attempts)",
    "GCC: (GNU) 11.2.0 20220127 (built with default options)",
    "verbose logging enabled, writing trace records to %s",
    "checkpoint saved, resume with --continue to pick up here",
    "temporary files kept in %s, remove them with --clean",
]


def _words(rng: np.random.Generator, pool: list[str], count: int) -> list[str]:
    return [pool[int(i)] for i in rng.integers(0, len(pool), count)]


def _phrase(rng: np.random.Generator, tag: str) -> str:
    verb, = _words(rng, _VERBS, 1)
    noun, = _words(rng, _NOUNS, 1)
    num = int(rng.integers(0, 10000))
    return f"{tag}: {verb} {noun} buffer {num}"


def _symbol_name(rng: np.random.Generator, index: int) -> str:
    verb, = _words(rng, _VERBS, 1)
    noun, = _words(rng, _NOUNS, 1)
    return f"{verb}_{noun}_{index}"


def _substream(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([seed, *path])


@dataclass(frozen=True)
class _ToolBase:
    code: bytes
    strings: tuple[str, ...]
    symbols: tuple[str, ...]
    # leading entries modeled as toolchain-owned, never churned by versions
    stable_strings: int
    stable_symbols: int


def _class_tool_bases(spec: SyntheticSpec, class_idx: int) -> tuple[str, list[str], list[_ToolBase]]:
    """Class name, tool names, and per-tool base payloads."""
    rng = _substream(spec.seed, 0, class_idx)
    noun, = _words(rng, _NOUNS, 1)
    class_name = f"class{class_idx:02d}_{noun}"

    lo, hi = spec.sample_range()
    n_tools = int(rng.integers(lo, hi + 1))
    n_symbols = int(rng.integers(16, 23))
    n_strings = int(rng.integers(22, 33))
    n_common_symbols = int(rng.integers(8, 13))
    n_common_phrases = int(rng.integers(12, 17))

    class_symbols = [_symbol_name(rng, int(rng.integers(0, 100))) for _ in range(n_symbols)]
    class_strings = [_phrase(rng, class_name) for _ in range(n_strings)]

    tools = []
    bases = []
    for tool_idx in range(n_tools):
        trng = _substream(spec.seed, 1, class_idx, tool_idx)
        suffix = _TOOL_SUFFIXES[tool_idx % len(_TOOL_SUFFIXES)]
        tool_name = f"{class_name.split('_', 1)[1]}{suffix}"
        code = trng.bytes(int(trng.integers(1200, 2400)))
        extra_symbols = [_symbol_name(trng, 100 + i) for i in range(int(trng.integers(2, 5)))]
        extra_strings = [_phrase(trng, tool_name) for _ in range(int(trng.integers(3, 7)))]
        # underscore names sort ahead of every lowercase name, so the common
        # block stays the leading run of the sorted symbol list
        symbols = _COMMON_SYMBOLS[:n_common_symbols] + sorted(class_symbols + extra_symbols)
        strings = _COMMON_PHRASES[:n_common_phrases] + class_strings + extra_strings
        tools.append(tool_name)
        bases.append(
            _ToolBase(
                code=code,
                strings=tuple(strings),
                symbols=tuple(symbols),
                stable_strings=n_common_phrases,
                stable_symbols=n_common_symbols,
            )
        )
    return class_name, tools, bases


def _churn_count(rng: np.random.Generator, n_items: int, rate: float) -> int:
    if rate <= 0.0 or n_items == 0:
        return 0
    drawn = int(rng.binomial(n_items, rate))
    return min(drawn, max(1, n_items // 6))


def _mutate_tool(
    base: _ToolBase, spec: SyntheticSpec, class_idx: int, tool_idx: int, version_idx: int
) -> _ToolBase:
    rng = _substream(spec.seed, 2, class_idx, tool_idx, version_idx)
    code = bytearray(base.code)
    if spec.mutation_rate > 0.0:
        mask = rng.random(len(code)) < spec.mutation_rate
        replacements = rng.integers(1, 256, int(mask.sum()), dtype=np.uint16)
        for pos, delta in zip(np.flatnonzero(mask), replacements):
            code[pos] = (code[pos] + int(delta)) % 256

    # churn replaces one contiguous run of non-toolchain entries, like a
    # single touched feature area, so chunked fuzzy hashes keep long
    # unchanged stretches
    string_rate = spec.mutation_rate if spec.string_churn_rate is None else spec.string_churn_rate
    strings = list(base.strings)
    n_changes = _churn_count(rng, len(strings) - base.stable_strings, string_rate)
    if n_changes:
        start = base.stable_strings + int(
            rng.integers(0, len(strings) - base.stable_strings - n_changes + 1)
        )
        del strings[start : start + n_changes]
        strings += [_phrase(rng, f"v{version_idx}") for _ in range(n_changes)]

    symbol_rate = spec.mutation_rate if spec.symbol_churn_rate is None else spec.symbol_churn_rate
    symbols = list(base.symbols)
    n_sym_changes = _churn_count(rng, len(symbols) - base.stable_symbols, symbol_rate)
    if n_sym_changes:
        start = base.stable_symbols + int(
            rng.integers(0, len(symbols) - base.stable_symbols - n_sym_changes + 1)
        )
        del symbols[start : start + n_sym_changes]
        # late-sorting prefix keeps churned names in one block after sorting
        symbols += [
            f"z{version_idx}_{_symbol_name(rng, i)}" for i in range(n_sym_changes)
        ]
        symbols.sort()

    return _ToolBase(
        code=bytes(code),
        strings=tuple(strings),
        symbols=tuple(symbols),
        stable_strings=base.stable_strings,
        stable_symbols=base.stable_symbols,
    )


def generate_synthetic_corpus(spec: SyntheticSpec, root: Path) -> Path:
    """Write the class/version/sample tree of synthetic ELF executables.

    Fully deterministic for a given spec: the same spec written twice yields
    byte-identical trees. Returns the root directory.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for class_idx in range(spec.n_classes):
        class_name, tools, bases = _class_tool_bases(spec, class_idx)
        for version_idx in range(spec.versions_per_class):
            version_dir = root / class_name / f"v{version_idx + 1}.0"
            version_dir.mkdir(parents=True, exist_ok=True)
            for tool_idx, (tool_name, base) in enumerate(zip(tools, bases)):
                mutated = _mutate_tool(base, spec, class_idx, tool_idx, version_idx)
                image = build_elf(
                    mutated.code,
                    list(mutated.strings),
                    list(mutated.symbols),
                )
                path = version_dir / tool_name
                path.write_bytes(image)
                path.chmod(0o755)
    return root
