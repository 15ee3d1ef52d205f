import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def acceptance_config():
    return json.loads((ROOT / "configs" / "acceptance.json").read_text())


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
