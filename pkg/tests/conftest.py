"""Shared fixtures and test doubles."""

import numpy as np
import pytest

from gpplan.robot import BodyCircle, PlanarArm, PointRobot
from gpplan.scenarios import make_scenario


class DiskSDF:
    """Analytic signed distance to a single disk (a smooth stand-in for a grid SDF)."""

    def __init__(self, center=(1.0, 0.6), radius=0.3):
        self.center = np.asarray(center, dtype=float)
        self.radius = radius

    def query(self, p):
        p = np.asarray(p, dtype=float)
        d = np.linalg.norm(p - self.center, axis=-1) - self.radius
        return float(d) if p.ndim == 1 else d

    def query_and_gradient(self, p):
        p = np.asarray(p, dtype=float)
        v = p - self.center
        n = np.linalg.norm(v, axis=-1)
        d = n - self.radius
        return (float(d) if p.ndim == 1 else d), v / n[..., None]


@pytest.fixture
def disk_sdf():
    return DiskSDF()


@pytest.fixture
def arm2():
    circles = (BodyCircle(0, 0.5, 0.05), BodyCircle(1, 0.4, 0.05), BodyCircle(1, 0.8, 0.05))
    return PlanarArm((1.0, 0.8), joint_limits=[[-3.0, 3.0], [-2.5, 2.5]], circles=circles)


@pytest.fixture
def arm3():
    return PlanarArm((0.8, 0.7, 0.5), base=(0.1, -0.2, 0.3))


@pytest.fixture
def point_robot():
    return PointRobot(0.1, [[-2.0, 2.0], [-2.0, 2.0]], [1.5, 1.5])


@pytest.fixture(scope="session")
def sdf_cache():
    return {}


@pytest.fixture(scope="session")
def small_problem(sdf_cache):
    return make_scenario("arm2_box", sdf_cache=sdf_cache)


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    J = np.zeros((len(f0), len(x)))
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * h)
    return J


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
