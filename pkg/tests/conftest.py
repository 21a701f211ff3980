import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from dfgprint.graph import DataFlowGraph  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def diamond():
    # a consumes b and c, which both consume d
    return DataFlowGraph({1: "other", 2: "xor", 3: "xor", 4: "and"}, [(1, 2), (1, 3), (2, 4), (3, 4)])


@pytest.fixture
def chain():
    return DataFlowGraph({1: "xor", 2: "and", 3: "shr"}, [(1, 2), (2, 3)])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
