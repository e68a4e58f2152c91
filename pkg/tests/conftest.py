import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# filled by the acceptance suite, printed once at the end of the session
CRITERIA = {}


def record(number, ok, detail):
    CRITERIA[number] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
