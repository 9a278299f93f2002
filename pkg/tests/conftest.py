from __future__ import annotations

import contextlib
import io
from pathlib import Path

import pytest

from dofoc.cli import main

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def run_cli(*argv: str) -> tuple[int, str, str]:
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="session")
def sec4_run(tmp_path_factory: pytest.TempPathFactory) -> dict:
    """One ``dofoc solve paper_example_sec4`` run at the default resolution."""
    import time

    out = tmp_path_factory.mktemp("sec4_run")
    start = time.perf_counter()
    code, stdout, stderr = run_cli("solve", "paper_example_sec4", "--out", str(out))
    elapsed = time.perf_counter() - start
    return {"code": code, "stdout": stdout, "stderr": stderr, "out": Path(out), "elapsed": elapsed}


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:  # noqa: ARG001
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
