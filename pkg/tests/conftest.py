import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from singular_liouville.geometry import DomainModel, PotentialModel, holomorphic_derivatives

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk():
    return DomainModel.unit_disk()


@pytest.fixture(scope="session")
def trefoil():
    """The l = 3 symmetric curve r = 1 + 0.1 cos 3 theta."""
    return DomainModel.curve([1.0, 0.0, 0.0, 0.1], symmetry_order=3)


@pytest.fixture(scope="session")
def pot_radial():
    return PotentialModel.quadratic(1.0, (0.0, 0.0), 1.0, 1.0)


@pytest.fixture(scope="session")
def kernels_disk3(disk):
    return holomorphic_derivatives(disk, 4, 3)


@pytest.fixture(scope="session")
def kernels_disk2(disk):
    return holomorphic_derivatives(disk, 4, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def verdict(pytestconfig):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines = pytestconfig.stash.setdefault(_VERDICTS, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


_VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
