import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def half_space_points(rng, m, n, scale=2.0):
    y = rng.normal(size=(m, n)) * scale
    y[:, -1] = np.abs(y[:, -1])
    return y


def boundary_points(rng, m, n, scale=2.0):
    y = half_space_points(rng, m, n, scale)
    y[:, -1] = 0.0
    return y


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
