from __future__ import annotations

import numpy as np
import pytest

from helpers import grid
from grdesign.env import GridEnvironment


@pytest.fixture
def single_block_env() -> GridEnvironment:
    # wcd 2 (shared prefix RR); blocking (1,2) forces the lower goal to start with D
    return grid([
        "S..0",
        ".x..",
        "....",
        "...1",
    ])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE, key=lambda n: (int(n.rstrip("ab")), n)):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
