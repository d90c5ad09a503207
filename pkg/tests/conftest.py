import pytest

_CRITERIA: list[str] = []


@pytest.fixture(autouse=True)
def _family_cache(tmp_path_factory, monkeypatch):
    # keep the on-disk family cache out of the user's home during tests
    monkeypatch.setenv("ACKRADIO_CACHE", str(tmp_path_factory.getbasetemp() / "family-cache"))


@pytest.fixture
def criterion():
    """report(num, name, ok, detail) prints and stores one acceptance line."""

    def report(num, name, ok, detail=""):
        line = f"criterion {num} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
