import numpy as np
import pytest

from avicontact.state import FIXED, Body, State


def make_state(specs, q, qdot=None):
    """specs: list of (kind, radius, mass[, normal])."""
    bodies = []
    for i, s in enumerate(specs):
        kind, radius, mass = s[:3]
        normal = s[3] if len(s) > 3 else None
        bodies.append(Body(i, kind, radius=radius, mass=mass, normal=normal))
    return State(bodies, q, qdot)


@pytest.fixture
def two_discs():
    return make_state([("disc", 0.1, 1.0), ("disc", 0.1, 1.0)],
                      [[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]])


@pytest.fixture
def particle_over_plane():
    return make_state([("particle", 0.0, 1.0), ("halfplane", 0.0, FIXED, (0.0, 1.0))],
                      [[0.0, 1.0], [0.0, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_REPORT = []


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        _REPORT.append(line)
        with capsys.disabled():
            print("\n" + line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
