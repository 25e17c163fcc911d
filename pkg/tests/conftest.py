import re

_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    num, name = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call" or report.outcome == "failed":
        prev = _outcomes.get(num, ("PASS", name))[0]
        status = "FAIL" if report.outcome == "failed" or prev == "FAIL" else "PASS"
        _outcomes[num] = (status, name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        status, name = _outcomes[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {name}")
