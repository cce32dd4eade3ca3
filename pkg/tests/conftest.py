import numpy as np
import pytest

from gedfn.graph_core import generate_ba_graph


@pytest.fixture(scope="session")
def ba_small():
    return generate_ba_graph(300, 1, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion id -> (passed, detail); filled by test_acceptance and printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
