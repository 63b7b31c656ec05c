import pytest

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    ok = call.excinfo is None
    prev = _CRITERIA.get(number)
    if prev is not None:
        ok = ok and prev[1]
        details = prev[2] + details
    _CRITERIA[number] = (title, ok, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(record_property):
    """Attach a short measurement to the acceptance summary line."""

    def add(text):
        record_property("detail", text)

    return add
