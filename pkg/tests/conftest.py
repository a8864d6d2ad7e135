import pathlib

import numpy as np
import pytest

from swingcct.cct import prepare
from swingcct.model import load_scenario_file

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def two_machine():
    return load_scenario_file(FIXTURES / "two_machine.json")


@pytest.fixture(scope="session")
def chain():
    return load_scenario_file(FIXTURES / "three_machine_chain.json")


@pytest.fixture(scope="session")
def ieee14():
    return load_scenario_file(FIXTURES / "ieee14_en.json")


@pytest.fixture(scope="session")
def two_machine_prep(two_machine):
    return prepare(two_machine)


@pytest.fixture(scope="session")
def chain_prep(chain):
    return prepare(chain)


@pytest.fixture(scope="session")
def ieee14_prep(ieee14):
    return prepare(ieee14)


def oracle_agreement(sset, grid, contains_many):
    """Fraction of off-boundary grid points where polygon and oracle agree."""
    Z1, Z2 = np.meshgrid(grid.z1, grid.z2)
    pts = np.column_stack([Z1.ravel(), Z2.ravel()])
    inside, on_boundary = contains_many(sset, pts)
    inside = inside.reshape(grid.inside.shape)
    mask = ~on_boundary.reshape(grid.inside.shape)
    return float((inside[mask] == grid.inside[mask]).mean())
