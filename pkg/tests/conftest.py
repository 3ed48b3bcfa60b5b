import os

import numpy as np
import pytest
from hypothesis import settings

from netdefrl.harness.experiment import resolve_topology
from netdefrl.topology import Topology

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def make_topology(n, edges, critical=(0,), compromised=(), migration=(), observable=None, observable_links=None):
    nodes = tuple(range(n))
    obs = nodes if observable is None else tuple(observable)
    if observable_links is None:
        observable_links = [i for i, (a, b) in enumerate(edges) if a in obs and b in obs]
    return Topology(nodes, tuple(edges), frozenset(critical), frozenset(migration), frozenset(compromised),
                    frozenset(obs), frozenset(observable_links))


def line(n, critical=0, compromised=None):
    """Path 0-1-...-(n-1), attacker at the far end by default."""
    comp = (n - 1,) if compromised is None else compromised
    return make_topology(n, [(i, i + 1) for i in range(n - 1)], (critical,), comp)


@pytest.fixture(scope="session")
def desk():
    return resolve_topology({"builtin": "desk12"})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(LINES, key=lambda k: int(k[1:])):
            terminalreporter.write_line(LINES[key])
