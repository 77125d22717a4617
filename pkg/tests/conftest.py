import pytest

ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call ``criterion(n, text)`` before asserting."""
    entry = {"test": request.node.name, "n": None, "text": ""}

    def record(n, text):
        entry["n"], entry["text"] = n, text

    yield record
    rep = getattr(request.node, "rep_call", None)
    entry["ok"] = rep is not None and rep.passed
    if entry["n"] is not None:
        ACCEPTANCE.append(entry)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for e in sorted(ACCEPTANCE, key=lambda e: e["n"]):
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {e['n']}: {status}  {e['text']}")
