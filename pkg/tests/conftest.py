import json
from pathlib import Path

import pytest

from convgraph import build_graph, build_vocabulary
from convgraph.synthetic import fixture_f1

GOLDEN = Path(__file__).parent / "golden"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def golden():
    return json.loads((GOLDEN / "f1.json").read_text())


@pytest.fixture
def f1_corpus():
    return fixture_f1()


@pytest.fixture
def f1_vocab(f1_corpus):
    return build_vocabulary(f1_corpus)


@pytest.fixture
def f1_graph(f1_corpus, f1_vocab):
    return build_graph(f1_corpus, f1_vocab)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
