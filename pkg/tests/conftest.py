import hypothesis
import pytest

from relcluster.corpus import load_corpus

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")

from pathlib import Path

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_corpus():
    return load_corpus(DATA / "fixture_corpus.jsonl")
