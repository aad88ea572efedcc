import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fermion_pimc.potentials import harmonic, harmonic_coulomb
from fermion_pimc.system import SystemSpec

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def v1_small():
    return SystemSpec(3, 3, 1.0, harmonic())


@pytest.fixture
def v2_small():
    return SystemSpec(3, 3, 1.0, harmonic_coulomb(0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store one PASS/FAIL line per acceptance criterion; printed at session end."""

    def record(number: int, passed: bool, detail: str) -> bool:
        previous = CRITERIA.get(number)
        if previous is not None:
            passed = passed and previous[0]
            detail = f"{previous[1]}; {detail}"
        CRITERIA[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}")
