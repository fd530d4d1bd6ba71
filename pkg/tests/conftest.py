"""Shared fixtures: paths to the committed test-vector files."""

from pathlib import Path

import pytest

VECTOR_DIR = Path(__file__).parent / "vectors"


@pytest.fixture(scope="session")
def vector_dir() -> Path:
    return VECTOR_DIR


@pytest.fixture(scope="session")
def stream_manifest() -> list[tuple[str, int]]:
    lines = (VECTOR_DIR / "streams.txt").read_text().splitlines()
    return [(name, int(size)) for name, size in (l.split() for l in lines)]


@pytest.fixture(scope="session")
def expected_digests() -> list[str]:
    return (VECTOR_DIR / "digests.txt").read_text().splitlines()


@pytest.fixture(scope="session")
def expected_pairs() -> list[tuple[str, str, int]]:
    lines = (VECTOR_DIR / "pairs.txt").read_text().splitlines()
    return [(a, b, int(s)) for a, b, s in (l.split() for l in lines)]
