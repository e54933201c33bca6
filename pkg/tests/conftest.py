import pytest

from attitude_ensemble.cli import main

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Five 16x16 views, 300 s at 4 Hz; seed 7 covers all nine classes."""
    out = tmp_path_factory.mktemp("cli") / "data"
    code = main(["generate", "--duration", "300", "--rate", "4", "--views", "all", "--seed", "7",
                 "--size", "16", "--mild", "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
