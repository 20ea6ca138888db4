from pathlib import Path

import pytest

from ged import build, parse

DESIGNS = Path(__file__).resolve().parent.parent / "designs"


def program(name: str) -> str:
    return (DESIGNS / f"{name}.ged").read_text(encoding="utf-8")


@pytest.fixture
def fisher_src() -> str:
    return program("fisher")


@pytest.fixture
def pheasant_src() -> str:
    return program("pheasant")


@pytest.fixture
def motion_src() -> str:
    return program("motion")


@pytest.fixture
def fisher(fisher_src):
    return build(parse(fisher_src))


@pytest.fixture
def pheasant(pheasant_src):
    return build(parse(pheasant_src))


@pytest.fixture
def motion(motion_src):
    return build(parse(motion_src))


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Print one pass/fail line for an acceptance criterion and keep it for the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
