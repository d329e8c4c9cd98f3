import pytest

# filled by tests/test_acceptance.py; one (number, title, passed, seconds, detail) per criterion
ACCEPTANCE_RESULTS = []


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:>2} {status}  {title} ({seconds:.2f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
