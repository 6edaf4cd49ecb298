import pytest

from disassembly_planner.model import load_model

from helpers import CORPUS, FIG3


@pytest.fixture(scope="session")
def fig3():
    return load_model(FIG3)


@pytest.fixture(scope="session")
def corpus():
    return [(p.stem, load_model(p)) for p in CORPUS]


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
