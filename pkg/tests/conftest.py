from __future__ import annotations

import sys

import pytest

from cnpsim.config import RunConfig
from cnpsim.pursuit import GridWorld, Layout, Prey
from cnpsim.simulation import Scenario, capture_task


def far_scenario(contractors: int, bid_window: int = 5) -> Scenario:
    """One task whose prey sits in the far corner of a 10x10 grid.

    Predators line the left column, so no capture can happen inside a
    five-tick contract and every run goes the full work length.
    """
    ids = [f"p{i}" for i in range(1, contractors + 1)]
    world = GridWorld(
        width=10,
        height=10,
        predators={pid: (0, i) for i, pid in enumerate(ids)},
        preys={"prey-1": Prey((9, 9))},
    )
    layout = Layout(world, ids, ["prey-1"], [(9, 0)])
    return Scenario(layout=layout, tasks=[capture_task("T1", "prey-1", bid_window)])


@pytest.fixture
def default_config() -> RunConfig:
    return RunConfig()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
