import time

import pytest

from exitgame import load, solve

_SOLVED = {}


def solved(name):
    """Solve a shipped scenario once per session; returns (cfg, field, report, seconds)."""
    if name not in _SOLVED:
        cfg = load(name)
        t0 = time.perf_counter()
        vf, rep = solve(cfg.spec, cfg.grid, cfg.solver)
        _SOLVED[name] = (cfg, vf, rep, time.perf_counter() - t0)
    return _SOLVED[name]


@pytest.fixture(scope="session")
def reachable():
    return solved("reachable_1d")


@pytest.fixture(scope="session")
def forced():
    return solved("forced_lifeline_1d")


@pytest.fixture(scope="session")
def pursuit():
    return solved("pursuit_2d")


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
