import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from edgevo.geometry import CameraIntrinsics
from edgevo.synthetic import demo_sequence

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def K640():
    return CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0)


@pytest.fixture(scope="session")
def short_demo():
    return demo_sequence(8)


def random_pose(rng, max_angle=3.0, max_t=2.0):
    from edgevo.geometry import se3_exp

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    phi = axis * rng.uniform(0, max_angle)
    rho = rng.uniform(-max_t, max_t, size=3)
    return se3_exp(np.concatenate([rho, phi]))


class SmoothField:
    """Analytic stand-in for a distance field: D(u, v) and its exact gradient."""

    def __init__(self, width=640, height=480, offset=3.0):
        self.width, self.height = width, height
        self.offset = offset

    def sample(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        d = self.offset + 2 * np.sin(u / 23.0) * np.cos(v / 17.0) + 1e-3 * (u - 300) ** 2 / 50
        gu = 2 / 23.0 * np.cos(u / 23.0) * np.cos(v / 17.0) + 2e-3 * (u - 300) / 50
        gv = -2 / 17.0 * np.sin(u / 23.0) * np.sin(v / 17.0)
        ok = (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)
        return np.where(ok, d, 0.0), np.where(ok[..., None], np.stack([gu, gv], -1), 0.0), ok


class PointDistanceField:
    """Exact Euclidean distance to a single edge point ``c`` (smooth away from it)."""

    def __init__(self, c=(-200.0, -150.0), width=640, height=480):
        self.c = np.asarray(c, float)
        self.width, self.height = width, height

    def sample(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        du, dv = u - self.c[0], v - self.c[1]
        d = np.hypot(du, dv)
        ok = (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)
        g = np.stack([du / d, dv / d], -1)
        return np.where(ok, d, 0.0), np.where(ok[..., None], g, 0.0), ok


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
