from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from agedist import MdpSolution, SystemParams, value_iteration


@dataclass(frozen=True)
class TimedSolution:
    solution: MdpSolution
    seconds: float


@pytest.fixture
def defaults() -> SystemParams:
    return SystemParams()


@pytest.fixture(scope="session")
def standard_online_solution() -> TimedSolution:
    """Converged tables at the standard configuration (w=200, caps 100/30).

    Shared across the test session because value iteration at this size takes
    a few seconds; the wall time is kept for runtime-budget assertions.
    """
    start = time.monotonic()
    solution = value_iteration(SystemParams())
    return TimedSolution(solution, time.monotonic() - start)
