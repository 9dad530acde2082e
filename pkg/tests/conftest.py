import pytest

_LINES: list[tuple[int, str]] = []


@pytest.fixture
def verdict():
    """Record a one-line acceptance verdict; printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str, notes=()) -> bool:
        lines = [f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"]
        lines += [f"      {n}" for n in notes]
        _LINES.append((number, "\n".join(lines)))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, block in sorted(_LINES, key=lambda item: item[0]):
        for line in block.splitlines():
            terminalreporter.write_line(line)
