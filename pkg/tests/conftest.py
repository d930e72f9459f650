import pytest

from compgeo import comparison_engine as ce


@pytest.fixture(autouse=True)
def _fresh_cache():
    # geodesic cache is keyed by object ids, which can be reused across tests
    ce.clear_cache()
    yield


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(LINES, key=lambda k: (int(k.split(".")[0]), k)):
        terminalreporter.write_line(LINES[key])
