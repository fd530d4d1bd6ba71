"""Context-triggered piecewise hashing (CTPH) with ssdeep-compatible digests.

A digest carries a block size and two signatures: sig1 encodes chunks cut
where a 7-byte rolling hash hits a block-size-dependent trigger, sig2 encodes
the same stream at double the block size so digests of nearby sizes stay
comparable. Similarity between two digests is a 0 to 100 score derived from
the edit distance of their signatures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
MIN_BLOCK_SIZE = 3
SIG1_MAX_LEN = 64
SIG2_MAX_LEN = 32

_WINDOW = 7
_FNV_PRIME = 0x01000193
_FNV_INIT = 0x28021967
# sig characters use only the low 6 bits of the FNV-1 state, and those bits
# evolve independently of the high bits, so one small table replaces the
# 32-bit multiply
_FNV_TABLE = tuple(
    bytes(((s * _FNV_PRIME) ^ c) & 0x3F for c in range(256)) for s in range(64)
)
_FNV_INIT_LOW = _FNV_INIT & 0x3F
# below this block size, scores of short signatures are capped
_CAP_EXEMPT_BLOCK_SIZE = (99 + _WINDOW) // _WINDOW * MIN_BLOCK_SIZE

_ALPHABET_SET = frozenset(ALPHABET)
_RUN_RE = re.compile(r"(.)\1{3,}")
_DIGEST_RE = re.compile(r"^(\d+):([A-Za-z0-9+/]*):([A-Za-z0-9+/]*)$")


class DigestParseError(ValueError):
    """Raised when a digest string is not a valid canonical fuzzy hash."""


def _is_valid_block_size(value: int) -> bool:
    if value < MIN_BLOCK_SIZE or value % MIN_BLOCK_SIZE != 0:
        return False
    power = value // MIN_BLOCK_SIZE
    return power & (power - 1) == 0


@dataclass(frozen=True, slots=True)
class FuzzyHash:
    """A parsed CTPH digest: block size plus the two encoded signatures."""

    block_size: int
    sig1: str
    sig2: str

    def __post_init__(self) -> None:
        if not _is_valid_block_size(self.block_size):
            raise ValueError(f"block size {self.block_size} is not 3*2^k")
        if len(self.sig1) > SIG1_MAX_LEN:
            raise ValueError(f"sig1 longer than {SIG1_MAX_LEN} characters")
        if len(self.sig2) > SIG2_MAX_LEN:
            raise ValueError(f"sig2 longer than {SIG2_MAX_LEN} characters")
        for sig in (self.sig1, self.sig2):
            if not _ALPHABET_SET.issuperset(sig):
                raise ValueError("signature contains non-alphabet characters")

    def __str__(self) -> str:
        return render(self)


def render(h: FuzzyHash) -> str:
    """Canonical text form "block_size:sig1:sig2"."""
    return f"{h.block_size}:{h.sig1}:{h.sig2}"


def parse(text: str) -> FuzzyHash:
    """Parse the canonical text form, rejecting anything malformed."""
    match = _DIGEST_RE.match(text)
    if match is None:
        raise DigestParseError(f"not a canonical fuzzy hash: {text!r}")
    block_size = int(match.group(1))
    try:
        return FuzzyHash(block_size, match.group(2), match.group(3))
    except ValueError as exc:
        raise DigestParseError(f"{exc}: {text!r}") from None


def _rolling_sums(data: bytes) -> np.ndarray:
    """Rolling hash value after each input byte (7-byte window, uint32)."""
    n = len(data)
    if n == 0:
        return np.zeros(0, dtype=np.uint32)
    padded = np.zeros(n + _WINDOW - 1, dtype=np.uint32)
    padded[_WINDOW - 1 :] = np.frombuffer(data, dtype=np.uint8)
    # views[k][i] is the byte k positions behind position i (0 before start)
    views = [padded[_WINDOW - 1 - k : _WINDOW - 1 - k + n] for k in range(_WINDOW)]
    h1 = np.zeros(n, dtype=np.uint32)
    h2 = np.zeros(n, dtype=np.uint32)
    h3 = np.zeros(n, dtype=np.uint32)
    for k, view in enumerate(views):
        h1 += view
        h2 += (_WINDOW - k) * view
        h3 ^= view << np.uint32(5 * k)
    return h1 + h2 + h3


def _piecewise_signature(
    data: bytes, triggers: list[int], reset_limit: int, final_roll: int
) -> str:
    """Encode one chunk character per trigger, FNV state resetting in between.

    Only the first `reset_limit` chunks get their own character; afterwards the
    state keeps accumulating and later triggers just re-snapshot it, merging
    the remainder into one character. A final character covers the bytes after
    the last reset whenever the rolling hash is nonzero at end of input.
    """
    table = _FNV_TABLE
    chars: list[str] = []
    state = _FNV_INIT_LOW
    prev = 0
    kept = min(len(triggers), reset_limit)
    for t in triggers[:kept]:
        for c in data[prev : t + 1]:
            state = table[state][c]
        chars.append(ALPHABET[state])
        state = _FNV_INIT_LOW
        prev = t + 1
    overflow_char = None
    if len(triggers) > kept:
        last = triggers[-1]
        for c in data[prev : last + 1]:
            state = table[state][c]
        overflow_char = ALPHABET[state]
        prev = last + 1
    for c in data[prev:]:
        state = table[state][c]
    if final_roll != 0:
        chars.append(ALPHABET[state])
    elif overflow_char is not None:
        chars.append(overflow_char)
    return "".join(chars)


def digest(data: bytes) -> FuzzyHash:
    """Compute the fuzzy hash of a byte sequence.

    The initial block size is the smallest 3*2^k whose 64 chunks cover the
    input; it is halved while fewer than 32 chunk boundaries fire, so short
    or boundary-poor inputs fall back to finer chunking.
    """
    n = len(data)
    block_size = MIN_BLOCK_SIZE
    while block_size * SIG1_MAX_LEN < n:
        block_size *= 2
    rollsums = _rolling_sums(data)
    trigger_value = rollsums + np.uint32(1)
    usable = trigger_value != 0
    while block_size > MIN_BLOCK_SIZE:
        count = int(np.count_nonzero(usable & (trigger_value % block_size == 0)))
        if count >= SIG1_MAX_LEN // 2:
            break
        block_size //= 2
    triggers1 = np.flatnonzero(usable & (trigger_value % block_size == 0)).tolist()
    triggers2 = np.flatnonzero(usable & (trigger_value % (2 * block_size) == 0)).tolist()
    final_roll = int(rollsums[-1]) if n else 0
    sig1 = _piecewise_signature(data, triggers1, SIG1_MAX_LEN - 1, final_roll)
    sig2 = _piecewise_signature(data, triggers2, SIG2_MAX_LEN - 1, final_roll)
    return FuzzyHash(block_size, sig1, sig2)


def normalize_signature(s: str) -> str:
    """Truncate any run of more than 3 identical characters to exactly 3."""
    return _RUN_RE.sub(lambda m: m.group(1) * 3, s)


def _has_common_substring(s1: str, s2: str) -> bool:
    """True when the strings share a substring of length 7."""
    if len(s1) < _WINDOW or len(s2) < _WINDOW:
        return False
    grams = {s1[i : i + _WINDOW] for i in range(len(s1) - _WINDOW + 1)}
    return any(s2[j : j + _WINDOW] in grams for j in range(len(s2) - _WINDOW + 1))


def _signature_distance(s1: str, s2: str) -> int:
    """Edit distance with insert/delete cost 1 and substitute cost 2."""
    prev = list(range(len(s2) + 1))
    for i, a in enumerate(s1, start=1):
        cur = [i]
        for j, b in enumerate(s2, start=1):
            cur.append(
                min(
                    prev[j] + 1,
                    cur[j - 1] + 1,
                    prev[j - 1] + (0 if a == b else 2),
                )
            )
        prev = cur
    return prev[len(s2)]


def _score_pair(s1: str, s2: str, block_size: int) -> int:
    """Score one normalized signature pair at the given block size."""
    if not _has_common_substring(s1, s2):
        return 0
    raw = _signature_distance(s1, s2)
    scaled = raw * SIG1_MAX_LEN // (len(s1) + len(s2))
    score = 100 - 100 * scaled // SIG1_MAX_LEN
    if block_size < _CAP_EXEMPT_BLOCK_SIZE:
        # a short signature at a small block size covers too little input
        # to justify a high score
        cap = block_size // MIN_BLOCK_SIZE * min(len(s1), len(s2))
        score = min(score, cap)
    return score


def compare(a: FuzzyHash, b: FuzzyHash) -> int:
    """Similarity score between two fuzzy hashes on a 0 to 100 scale.

    Block sizes must be equal or differ by exactly a factor of two; anything
    else scores 0. Signatures are run-normalized first. Identical digests
    score 100 only when a signature is long enough (7 characters) to be
    distinctive; degenerate identical digests score 0.
    """
    if a.block_size != b.block_size and a.block_size * 2 != b.block_size and a.block_size != b.block_size * 2:
        return 0
    a1, a2 = normalize_signature(a.sig1), normalize_signature(a.sig2)
    b1, b2 = normalize_signature(b.sig1), normalize_signature(b.sig2)
    if a.block_size == b.block_size and a1 == b1 and a2 == b2:
        if len(a1) >= _WINDOW or len(a2) >= _WINDOW:
            return 100
        return 0
    if a.block_size == b.block_size:
        return max(
            _score_pair(a1, b1, a.block_size),
            _score_pair(a2, b2, a.block_size * 2),
        )
    if a.block_size * 2 == b.block_size:
        return _score_pair(b1, a2, b.block_size)
    return _score_pair(a1, b2, a.block_size)


def osa_distance(s: str, t: str) -> int:
    """Restricted Damerau-Levenshtein (optimal string alignment) distance.

    Unit-cost insertions, deletions, and substitutions, plus a unit-cost swap
    of adjacent characters when s[i-1] matches t[j-2] and s[i-2] matches
    t[j-1]; swapped characters cannot be edited again.
    """
    m, n = len(s), len(t)
    if m == 0:
        return n
    if n == 0:
        return m
    # hot path for signature scoring: scalar diag/left tracking and branch
    # minima beat row re-indexing; "" sentinels gate the transposition test
    # off the first row and column without explicit index checks
    older: list[int] = []
    prev = list(range(n + 1))
    s_prev = ""
    for i, sc in enumerate(s, 1):
        cur = [i]
        diag = i - 1
        left = i
        t_prev = ""
        for j, tc in enumerate(t, 1):
            up = prev[j]
            best = diag if sc == tc else diag + 1
            alt = up + 1
            if alt < best:
                best = alt
            alt = left + 1
            if alt < best:
                best = alt
            if sc == t_prev and s_prev == tc:
                alt = older[j - 2] + 1
                if alt < best:
                    best = alt
            cur.append(best)
            diag = up
            left = best
            t_prev = tc
        older = prev
        prev = cur
        s_prev = sc
    return prev[n]
