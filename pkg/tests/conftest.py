ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
