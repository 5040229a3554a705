import pytest

from fragfl import crypto


@pytest.fixture(scope="session")
def keys():
    # One 3072-bit key for the whole run; generation dominates otherwise.
    return crypto.ServerKeyPair.generate()


@pytest.fixture(scope="session")
def modp():
    return crypto.get_group()


@pytest.fixture(scope="session")
def toy_group():
    return crypto.get_group("test-23", allow_test=True)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        _CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
