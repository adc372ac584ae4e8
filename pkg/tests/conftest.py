import pytest

from tumorflow.config import default_config, orbit_config
from tumorflow.scheme import run_simulation


@pytest.fixture(scope="session")
def default_run():
    return run_simulation(default_config(64))


@pytest.fixture(scope="session")
def small_orbit_run():
    return run_simulation(orbit_config(32))


_CRITERIA = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Store a criterion outcome; the terminal summary prints one line each."""

    def record(number, title, ok, detail=""):
        _CRITERIA[number] = (title, bool(ok), detail)
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}  {detail}")
