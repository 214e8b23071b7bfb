from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def hand_fleet_path():
    return FIXTURES / "hand_fleet.yaml"


_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the line is echoed in the terminal summary."""

    def record(number, name, checks, elapsed, budget):
        ok = all(passed for _, passed in checks) and elapsed < budget
        detail = "; ".join(f"{label}={'ok' if passed else 'FAIL'}" for label, passed in checks)
        line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}  "
                f"[{elapsed:.2f}s < {budget:g}s] {detail}")
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
