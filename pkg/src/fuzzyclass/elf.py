"""Minimal native ELF reader: headers, sections, and symbol tables.

Parses 32-bit and 64-bit ELF files in either byte order, just enough to pull
global text symbols out of the static symbol table. No external tooling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

ELF_MAGIC = b"\x7fELF"

ELFCLASS32 = 1
ELFCLASS64 = 2
ELFDATA2LSB = 1
ELFDATA2MSB = 2

ET_EXEC = 2
ET_DYN = 3

SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_DYNSYM = 11

SHF_EXECINSTR = 0x4

STB_LOCAL = 0
STB_GLOBAL = 1
STB_WEAK = 2

SHN_UNDEF = 0
SHN_LORESERVE = 0xFF00


class NotElfError(ValueError):
    """The data does not start with the ELF magic."""


class StrippedError(ValueError):
    """The ELF has no static symbol table (.symtab)."""


class MalformedElfError(ValueError):
    """Headers are truncated or contain out-of-range offsets."""


@dataclass(frozen=True, slots=True)
class Section:
    name: str
    sh_type: int
    flags: int
    offset: int
    size: int
    link: int
    entsize: int


@dataclass(frozen=True, slots=True)
class Symbol:
    name: str
    binding: int
    section_index: int


@dataclass(frozen=True, slots=True)
class ElfFile:
    is_64bit: bool
    little_endian: bool
    elf_type: int
    entry: int
    sections: tuple[Section, ...]
    symbols: tuple[Symbol, ...]
    has_symtab: bool


def _read(data: bytes, fmt: str, offset: int, what: str) -> tuple:
    size = struct.calcsize(fmt)
    if offset < 0 or offset + size > len(data):
        raise MalformedElfError(f"truncated {what} at offset {offset}")
    return struct.unpack_from(fmt, data, offset)


def _string_at(table: bytes, offset: int, what: str) -> str:
    if offset >= len(table):
        raise MalformedElfError(f"{what} name offset {offset} outside string table")
    end = table.find(b"\x00", offset)
    if end < 0:
        end = len(table)
    return table[offset:end].decode("latin-1")


def parse_elf(data: bytes) -> ElfFile:
    """Parse ELF structure from raw bytes.

    Raises NotElfError on a magic mismatch, MalformedElfError on truncated or
    inconsistent headers. Symbol entries come from the .symtab section; files
    carrying only a dynamic symbol table parse with has_symtab False.
    """
    if len(data) < 4 or data[:4] != ELF_MAGIC:
        raise NotElfError("missing ELF magic")
    if len(data) < 16:
        raise MalformedElfError("truncated identification block")
    ei_class, ei_data = data[4], data[5]
    if ei_class not in (ELFCLASS32, ELFCLASS64):
        raise MalformedElfError(f"unknown ELF class {ei_class}")
    if ei_data not in (ELFDATA2LSB, ELFDATA2MSB):
        raise MalformedElfError(f"unknown ELF byte order {ei_data}")
    is_64 = ei_class == ELFCLASS64
    endian = "<" if ei_data == ELFDATA2LSB else ">"

    if is_64:
        header_fmt = endian + "HHIQQQIHHHHHH"
    else:
        header_fmt = endian + "HHIIIIIHHHHHH"
    (
        e_type,
        _machine,
        _version,
        e_entry,
        _phoff,
        e_shoff,
        _flags,
        _ehsize,
        _phentsize,
        _phnum,
        e_shentsize,
        e_shnum,
        e_shstrndx,
    ) = _read(data, header_fmt, 16, "ELF header")

    sections: list[Section] = []
    if e_shoff and e_shnum:
        sh_fmt = endian + ("IIQQQQIIQQ" if is_64 else "IIIIIIIIII")
        sh_size = struct.calcsize(sh_fmt)
        if e_shentsize < sh_size:
            raise MalformedElfError(f"section header entry size {e_shentsize} too small")
        if e_shoff + e_shnum * e_shentsize > len(data):
            raise MalformedElfError("section header table extends past end of file")
        raw_headers = [
            _read(data, sh_fmt, e_shoff + i * e_shentsize, "section header")
            for i in range(e_shnum)
        ]
        if e_shstrndx >= e_shnum:
            raise MalformedElfError(f"section name string table index {e_shstrndx} out of range")
        shstr = raw_headers[e_shstrndx]
        shstr_off, shstr_size = shstr[4], shstr[5]
        if shstr_off + shstr_size > len(data):
            raise MalformedElfError("section name string table extends past end of file")
        shstrtab = data[shstr_off : shstr_off + shstr_size]
        for fields in raw_headers:
            sh_name, sh_type, sh_flags, _addr, sh_offset, sh_sz, sh_link, _info, _align, sh_entsize = fields
            sections.append(
                Section(
                    name=_string_at(shstrtab, sh_name, "section"),
                    sh_type=sh_type,
                    flags=sh_flags,
                    offset=sh_offset,
                    size=sh_sz,
                    link=sh_link,
                    entsize=sh_entsize,
                )
            )

    symbols: list[Symbol] = []
    has_symtab = False
    for section in sections:
        if section.sh_type != SHT_SYMTAB:
            continue
        has_symtab = True
        symbols.extend(_parse_symbols(data, sections, section, endian, is_64))

    return ElfFile(
        is_64bit=is_64,
        little_endian=ei_data == ELFDATA2LSB,
        elf_type=e_type,
        entry=e_entry,
        sections=tuple(sections),
        symbols=tuple(symbols),
        has_symtab=has_symtab,
    )


def _parse_symbols(
    data: bytes, sections: list[Section], symtab: Section, endian: str, is_64: bool
) -> list[Symbol]:
    sym_fmt = endian + ("IBBHQQ" if is_64 else "IIIBBH")
    entry_size = symtab.entsize or struct.calcsize(sym_fmt)
    if entry_size < struct.calcsize(sym_fmt):
        raise MalformedElfError(f"symbol entry size {entry_size} too small")
    if symtab.offset + symtab.size > len(data):
        raise MalformedElfError("symbol table extends past end of file")
    if symtab.link >= len(sections):
        raise MalformedElfError(f"symbol string table index {symtab.link} out of range")
    strtab_section = sections[symtab.link]
    if strtab_section.offset + strtab_section.size > len(data):
        raise MalformedElfError("symbol string table extends past end of file")
    strtab = data[strtab_section.offset : strtab_section.offset + strtab_section.size]

    symbols = []
    for i in range(symtab.size // entry_size):
        fields = _read(data, sym_fmt, symtab.offset + i * entry_size, "symbol")
        if is_64:
            st_name, st_info, _other, st_shndx = fields[0], fields[1], fields[2], fields[3]
        else:
            st_name, st_info, st_shndx = fields[0], fields[3], fields[5]
        symbols.append(
            Symbol(
                name=_string_at(strtab, st_name, "symbol"),
                binding=st_info >> 4,
                section_index=st_shndx,
            )
        )
    return symbols


def global_text_symbol_names(elf: ElfFile) -> list[str]:
    """Names of global-binding symbols defined in executable sections.

    Weak symbols are excluded; only ordinary global binding counts. The
    result order follows the symbol table; callers sort as needed.
    """
    names = []
    for sym in elf.symbols:
        if sym.binding != STB_GLOBAL:
            continue
        idx = sym.section_index
        if idx == SHN_UNDEF or idx >= SHN_LORESERVE or idx >= len(elf.sections):
            continue
        if elf.sections[idx].flags & SHF_EXECINSTR:
            names.append(sym.name)
    return names
