import numpy as np
import pytest

from scalefuse._accel import HAVE_NUMBA
from scalefuse.geometry import DepthValidityRange, Intrinsics
from scalefuse.synth import synth_scene

BACKENDS = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def k100():
    # 101 x 101 image so that pixel (100, 50) is in bounds
    return Intrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)


@pytest.fixture
def validity():
    return DepthValidityRange(0.05, 20.0)


@pytest.fixture(scope="session")
def room():
    """Default 40-frame room with exact depths (no scale error)."""
    return synth_scene(n_frames=40, seed=0)


@pytest.fixture(scope="session")
def small_room():
    return synth_scene(n_frames=12, seed=3, k=Intrinsics(32.0, 32.0, 39.5, 29.5, 80, 60))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report -------------------------------------------------
ACCEPTANCE = {}


def record(number, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
