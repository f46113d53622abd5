"""Collects the outcome of each acceptance test and prints one line per criterion."""
import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    k = mark.args[0]
    detail = "; ".join(f"{n}={v}" for n, v in item.user_properties)
    # parametrized criteria report once, failing if any case fails
    ok, dur, prev = _results.get(k, (True, 0.0, ""))
    _results[k] = (ok and rep.passed, dur + rep.duration, "; ".join(filter(None, [prev, detail])))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        ok, dur, detail = _results[k]
        terminalreporter.write_line(
            f"criterion {k}: {'PASS' if ok else 'FAIL'}  ({dur:.1f} s)  {detail}")
