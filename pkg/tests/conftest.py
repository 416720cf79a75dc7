import re

import pytest

_ACCEPTANCE: dict[str, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if hasattr(report, "wasxfail"):
            verdict = "FAIL (expected; see decisions ledger)" if report.skipped else "PASS (unexpectedly)"
        elif report.passed:
            verdict = "PASS"
        else:
            verdict = "SKIP" if report.skipped else "FAIL"
        key = str(number)
        if key in _ACCEPTANCE:  # parametrized criterion: keep the worst verdict
            _, old_verdict, old_detail = _ACCEPTANCE[key]
            if old_verdict != "PASS":
                verdict = old_verdict
            detail = "; ".join(d for d in (old_detail, detail) if d)
        _ACCEPTANCE[key] = (title, verdict, detail)


def _order(key: str):
    m = re.match(r"(\d+)(.*)", key)
    return (int(m.group(1)), m.group(2))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=_order):
        title, verdict, detail = _ACCEPTANCE[number]
        line = f"criterion {number:>3} {verdict}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
