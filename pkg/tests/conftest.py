import math
import sys

import numpy as np
import pytest

from crossnav.geometry import CameraIntrinsics, DynamicLimits, RobotBody


@pytest.fixture
def intr640():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def base_body():
    return RobotBody(0.2, 0.2, 0.5)


@pytest.fixture
def limits():
    return DynamicLimits(0.5, math.pi / 4, 1.0, math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
