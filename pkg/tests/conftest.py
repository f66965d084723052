import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bladetwin.presets import load_reference  # noqa: E402


@pytest.fixture(scope="session")
def reference():
    """(BladeConfig, damages) of the shipped reference study."""
    return load_reference()


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Full default pipeline, run once per session (the acceptance campaign).

    Yields (run_dir, outcome, seconds).
    """
    import time

    from bladetwin.config import PipelineParams
    from bladetwin.hammer import ProtocolSpec
    from bladetwin.workflow import run_pipeline

    blade, damages = load_reference()
    run = tmp_path_factory.mktemp("default_run")
    t0 = time.perf_counter()
    outcome = run_pipeline(run, blade, damages, ProtocolSpec(), PipelineParams())
    return Path(run), outcome, time.perf_counter() - t0


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
