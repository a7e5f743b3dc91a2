import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mlconstructive.instance import Instance, Metric

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def square(metric=Metric.EUCLIDEAN):
    """Unit square corners in the order (0,0), (0,1), (1,1), (1,0)."""
    return Instance("square", np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]), metric)


def brute_force_tsp(inst):
    """Shortest tour by enumerating every permutation with node 0 first."""
    d = inst.cost_matrix()
    best = math.inf
    for perm in itertools.permutations(range(1, inst.n)):
        t = (0,) + perm
        length = sum(d[t[i], t[(i + 1) % inst.n]] for i in range(inst.n))
        best = min(best, length)
    return best


@pytest.fixture
def unit_square():
    return square()


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import ACCEPTANCE_KEY
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
