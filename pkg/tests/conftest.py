"""Suite-wide hooks.

The acceptance tests push one verdict line per criterion through
``record_verdict``; echoing them again in the terminal summary keeps the
verdicts visible even when pytest captures test stdout.
"""

_verdicts: list[str] = []


def record_verdict(line: str) -> None:
    _verdicts.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance verdicts")
        for line in _verdicts:
            terminalreporter.line(line)
