import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpsw.grid import Field, Grid
from lpsw.lab import RandomFieldSpec, random_field
from lpsw.partition import build_partition

settings.register_profile(
    "lpsw", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("lpsw")


@pytest.fixture(scope="session")
def grid16():
    return Grid(16, 2 * math.pi)


@pytest.fixture(scope="session")
def P16(grid16):
    return build_partition(grid16)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64, 8 * math.pi)


@pytest.fixture(scope="session")
def P64(grid64):
    return build_partition(grid64)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32, 8 * math.pi)


@pytest.fixture(scope="session")
def P32(grid32):
    return build_partition(grid32)


def random_band_field(P, seed, components=1, beta=2.0, amplitude=1.0):
    return random_field(P, RandomFieldSpec(beta, seed, amplitude), 0, 0, components=components)


def raw_noise(grid, seed, components=1):
    rng = np.random.default_rng(seed)
    shape = grid.shape if components == 1 else (components, *grid.shape)
    return Field(grid, rng.standard_normal(shape))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder for acceptance criteria: record(number, ok, detail)."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, ok, detail):
        results[number] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")
