def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line-per-criterion acceptance results, when collected."""
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
