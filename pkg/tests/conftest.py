import numpy as np
import pytest

from agehawkes import kernels as K
from agehawkes import rates as R
from agehawkes.network import AgeLaw, InitialSignal, NetworkConfig, Population


def one_class(rate, kernel=None, size=1, T=100.0, mode="finite", signal=None, age=None, **kw):
    kernel = K.zero_kernel() if kernel is None else kernel
    pop = Population(size, rate, signal or InitialSignal(), age or AgeLaw())
    return NetworkConfig((pop,), K.KernelMatrix(((kernel,),)), T, mode, **kw)


def two_class(rate, kernels, sizes=(1, 1), T=100.0, mode="finite", signal=None, ages=(None, None), **kw):
    pops = tuple(Population(n, rate, signal or InitialSignal(), a or AgeLaw()) for n, a in zip(sizes, ages))
    km = K.KernelMatrix(tuple(tuple(row) for row in kernels))
    return NetworkConfig(pops, km, T, mode, **kw)


@pytest.fixture
def renewal_rate():
    return R.hard_refractory(R.constant(1.0), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in str(k) if c.isdigit())), str(k))):
            terminalreporter.write_line(ACCEPTANCE[key])
