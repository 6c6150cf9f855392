import pytest

# filled by tests/test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion.

    Usage: ``criterion(n, detail)`` before the asserts; the outcome follows
    the test result.
    """
    state = {}

    def record(number, detail=""):
        state["number"] = number
        state["detail"] = detail

    def update(detail):
        state["detail"] = detail

    record.update = update
    yield record
    if "number" in state:
        rep = getattr(request.node, "rep_call", None)
        ACCEPTANCE[state["number"]] = (rep is not None and rep.passed, state["detail"])


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
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        )
