import acceptance_report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = acceptance_report.lines()
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
