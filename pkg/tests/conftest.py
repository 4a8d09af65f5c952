from hypothesis import settings

settings.register_profile("default", derandomize=True)
settings.load_profile("default")

# filled by test_acceptance.py: criterion number -> report line
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
