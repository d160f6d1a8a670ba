import numpy as np
import pytest

from lowrank.kernels import _pykernels

try:
    from lowrank.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def low_rank(rng, m, n, r, noise=0.0):
    a = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    if noise:
        a = a + noise * rng.standard_normal((m, n))
    return a


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Remember (and print) the verdict of one acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
