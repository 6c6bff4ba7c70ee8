import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from switchps import THETA_REFERENCE, GeneratorConfig, generate

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_trial():
    """A 120-unit trial simulated at the reference parameters."""
    return generate(GeneratorConfig(n=120, theta_true=THETA_REFERENCE, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, text in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")
