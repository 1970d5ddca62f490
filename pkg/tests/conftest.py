import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sysid_task():
    from hybrid_rscn.presets import make_task

    return make_task("sysid", 0)


@pytest.fixture(scope="session")
def small_sysid_task():
    from hybrid_rscn.presets import make_task

    return make_task("sysid", 3, n_train=400, n_val=200, n_test=300)


@pytest.fixture(autouse=True)
def _quiet_nilpotent():
    from hybrid_rscn.reservoir import NilpotentReservoirWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NilpotentReservoirWarning)
        yield


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
