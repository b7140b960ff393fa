import pytest

from corpus_fixtures import make_corpus


@pytest.fixture
def corpus(tmp_path):
    return make_corpus(tmp_path / "marida")
