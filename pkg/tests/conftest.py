import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from photonstats.sim import DetectionConfig, EmitterConfig, simulate

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def pi_run():
    """Theta = pi, T_p = 15 ps, 10^6 pulses."""
    return simulate(EmitterConfig(pulse_area=np.pi, n_pulses=1_000_000, seed=11), DetectionConfig())


@pytest.fixture(scope="session")
def two_pi_run():
    return simulate(EmitterConfig(pulse_area=2 * np.pi, n_pulses=1_000_000, seed=12), DetectionConfig())


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
