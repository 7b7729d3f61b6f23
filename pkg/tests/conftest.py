import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from dgib.dyngraph import DynamicGraph, GraphSnapshot, SplitSpec, generate_synthetic

torch.set_num_threads(1)

settings.register_profile(
    "dgib",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("dgib")


def path_graph(n_snapshots=2, n=3, d=2, edges=((0, 1), (1, 2)), split=None):
    """Static path 0-1-2 repeated over ``n_snapshots`` snapshots."""
    rng = np.random.default_rng(0)
    snaps = [GraphSnapshot.build(t, np.array(edges), rng.standard_normal((n, d))) for t in range(1, n_snapshots + 1)]
    return DynamicGraph(snaps, rng.standard_normal((n, d)), split)


@pytest.fixture
def tiny_graph():
    return generate_synthetic(30, 4, 2, 0.3, 0.02, 0.1, 3, seed=11)


@pytest.fixture
def small_graph():
    return generate_synthetic(60, 6, 3, 0.25, 0.01, 0.1, 3, seed=5)


@pytest.fixture
def split_3_1_2():
    return SplitSpec(3, 1, 2)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
