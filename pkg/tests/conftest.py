import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

V0 = 0.25
# Input squeezed variances at 4.5 dB / 8 dB, by hand.
SQ_X = V0 * 10 ** (-4.5 / 10)
SQ_P = V0 * 10 ** (8 / 10)


def vclass_cov(sx=SQ_X, sp=SQ_P, eta=1.0):
    """v-class covariance written out by hand: (s +/- v)/sqrt(2), then loss."""
    vxa = eta * (sx + V0) / 2 + (1 - eta) * V0
    vpa = eta * (sp + V0) / 2 + (1 - eta) * V0
    cx = eta * (sx - V0) / 2
    cp = eta * (sp - V0) / 2
    return np.array([[vxa, 0, cx, 0], [0, vpa, 0, cp], [cx, 0, vxa, 0], [0, cp, 0, vpa]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
