"""Acceptance reporting: one pass/fail line per criterion in the terminal summary."""
import re

import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_c(\d+)_", item.name)
    if m is None or item.module.__name__.rpartition(".")[2] != "test_acceptance":
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        measured = "; ".join(v for k, v in item.user_properties if k == "measured")
        status, _, prev = _CRITERIA.get(int(m.group(1)), ("PASS", doc, ""))
        status = status if rep.passed else "FAIL"
        _CRITERIA[int(m.group(1))] = (status, doc, "; ".join(v for v in (prev, measured) if v))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, doc, measured = _CRITERIA[n]
        line = f"criterion {n:2d}: {status}  {doc}"
        terminalreporter.write_line(line + (f"  [{measured}]" if measured else ""))
