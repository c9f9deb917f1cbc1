import pytest

# criterion number -> summary line, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def report():
    def _report(n, ok, detail, seconds):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.1f} s)"
        ACCEPTANCE[n] = line
        print(line)
        return ok
    return _report
