from __future__ import annotations

import numpy as np
import pytest

from sigising.lattice import build_lattice


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_signals(rng, n):
    return np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)


@pytest.fixture(params=[3, 5, 8])
def city(request):
    return build_lattice(request.param)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
