import os

import numpy as np
import pytest

from fermiforge.io import load_model
from fermiforge.workflow import ModelLibrary

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "fermiforge", "data")


def data_path(name):
    return os.path.join(DATA, name)


@pytest.fixture(scope="session")
def m40():
    return load_model(data_path("mlsp2_b40_m0.3.json"))


@pytest.fixture(scope="session")
def e40():
    return load_model(data_path("entropy_b40_m0.3.json"))


@pytest.fixture(scope="session")
def m308():
    return load_model(data_path("mlsp2_b308.3_m0.5.json"))


@pytest.fixture(scope="session")
def m1500():
    return load_model(data_path("mlsp2_b1500_m0.333.json"))


@pytest.fixture(scope="session")
def library():
    return ModelLibrary.default()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
