import sys

import numpy as np
import pytest

from gnplab import convolution


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None) if mod else None
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)

BACKENDS = ["numpy"] + (["compiled"] if convolution.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def conv_backend(request):
    previous = convolution.backend_name()
    convolution.select_backend(request.param)
    yield request.param
    convolution.select_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
