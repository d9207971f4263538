"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    # a criterion checked by several tests passes only if all of them do
    prev = VERDICTS.get(criterion)
    if prev is not None:
        passed = passed and prev[0]
        detail = f"{prev[1]}; {detail}"
    VERDICTS[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        passed, detail = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
