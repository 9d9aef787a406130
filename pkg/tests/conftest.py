import pathlib

import pytest

from gridoutage.caseio import load_case

CASES = pathlib.Path(__file__).resolve().parent.parent / "cases"


@pytest.fixture(scope="session")
def sixbus():
    return load_case(CASES / "sixbus.json")


@pytest.fixture(scope="session")
def case14():
    return load_case(CASES / "case14.m")


@pytest.fixture(scope="session")
def net118():
    return load_case(CASES / "synth118.m")


@pytest.fixture(scope="session")
def cases_dir():
    return CASES
