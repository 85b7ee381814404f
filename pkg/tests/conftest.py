import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(mod.RESULTS, key=lambda c: (int(c.rstrip("abc")), c)):
        terminalreporter.write_line(mod.RESULTS[cid])
