from pathlib import Path

import pytest
import yaml

ACCEPTANCE = yaml.safe_load((Path(__file__).parent / "acceptance.yaml").read_text())
_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_cfg():
    return ACCEPTANCE


@pytest.fixture(scope="session")
def acceptance_report():
    return _LINES


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
