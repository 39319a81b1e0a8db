import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance verdict lines, echoed again at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def scenario_backend():
    from legalkg.mock import load_scenario

    return load_scenario(FIXTURES / "scenario.json")


@pytest.fixture
def corpus_docs():
    from legalkg.ingest import extract_opinion, load_corpus

    return [extract_opinion(d) for d in load_corpus(FIXTURES / "corpus")]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
