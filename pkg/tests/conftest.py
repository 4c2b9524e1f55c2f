from __future__ import annotations

import pytest

from loansim.stochastic import StreamProvider


@pytest.fixture
def streams() -> StreamProvider:
    return StreamProvider(42)


def pytest_terminal_summary(terminalreporter):
    from .acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
