import sys


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance PASS/FAIL lines after the normal report."""
    module = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    if module is None or not getattr(module, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
