import numpy as np
import pytest

from dpbrem.netsim import deploy, drop_ues

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    return deploy(n_pico=3, macro_antennas=8, pico_antennas=4)


@pytest.fixture(scope="session")
def desk_drop(desk):
    return drop_ues(desk, 20, seed=2024, drop_id=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


@pytest.fixture(scope="session")
def desk_rem(desk):
    from dpbrem import rem

    store = rem.RemStore()
    for i in range(30):
        for entry in rem.explore_all(desk, drop_ues(desk, 20, seed=7000 + i, drop_id=i)):
            store.record(entry)
    return store
