import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def annotation_paths() -> list[Path]:
    return sorted((FIXTURES / "annotations").glob("*.json"))


@pytest.fixture
def fixture_records(annotation_paths):
    from leaftile.annotations import load_corpus

    return load_corpus((str(p), p.read_bytes()) for p in annotation_paths)
