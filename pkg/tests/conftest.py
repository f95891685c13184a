"""Shared fixtures: the seeded bundled corpus and a trained model."""

from pathlib import Path

import pytest

from vulnminer.corpus import generate_synthetic_corpus
from vulnminer.detector import train_bundle
from vulnminer.source import SourceUnit

CORPUS_SEED = 7
CORPUS_SIZE = 200
POSITIVE_RATIO = 0.3
MODEL_SEED = 0

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus")
    generate_synthetic_corpus(path, seed=CORPUS_SEED, size=CORPUS_SIZE,
                              positive_ratio=POSITIVE_RATIO)
    return path


@pytest.fixture(scope="session")
def manifest(corpus_dir):
    from vulnminer.corpus import CorpusManifest

    return CorpusManifest.load(corpus_dir / "manifest.jsonl")


_train_seconds = {}


@pytest.fixture(scope="session")
def bundle(manifest):
    import time

    start = time.monotonic()
    result = train_bundle(manifest, seed=MODEL_SEED)
    _train_seconds["value"] = time.monotonic() - start
    return result


@pytest.fixture(scope="session")
def train_elapsed(bundle):
    return _train_seconds["value"]


@pytest.fixture(scope="session")
def corpus_units(manifest):
    return [SourceUnit.from_file(e.path) for e in manifest.entries]


@pytest.fixture(scope="session")
def labels(manifest):
    return {e.path: e.label for e in manifest.entries}


def fixture_unit(name: str) -> SourceUnit:
    return SourceUnit.from_file(FIXTURES / name)


@pytest.fixture
def command_injection_unit():
    return fixture_unit("command_injection.php")


@pytest.fixture
def command_injection_fixed_unit():
    return fixture_unit("command_injection_fixed.php")


@pytest.fixture
def sql_auth_unit():
    return fixture_unit("sql_auth.php")


@pytest.fixture
def clean_unit():
    return fixture_unit("clean_page.php")
