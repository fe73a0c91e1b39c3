import time
from types import SimpleNamespace

import numpy as np
import pytest

from infobalance.perturbation import PerturbationSchedule
from infobalance.scenario import Scenario

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def regulation_runs():
    """Final-half p_hat statistics of the default CIMA scenario, 30 seeds, T = 5e4."""
    scenario = Scenario()
    sched = PerturbationSchedule(base_sigma_sq=1.0)
    target = scenario.cima.target_p
    T = 50_000
    means, inside = [], []
    t0 = time.perf_counter()
    for seed in range(30):
        trace, _ = scenario.run(sched, T, seed)
        p = np.array([r.p_hat for r in trace[T // 2 :]])
        means.append(p.mean())
        inside.append(np.mean(np.abs(p - target) <= 0.1))
    return SimpleNamespace(
        target=target, means=np.array(means), inside=np.array(inside),
        seconds=time.perf_counter() - t0,
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
