import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conerisk.fixtures import (
    avar_scenario_set,
    binary_tree,
    coin_tree,
    f3_numeraire,
    f4_market,
    trinomial_emm_fixture,
)

F = Fraction


@pytest.fixture(scope="session")
def f1():
    return coin_tree()


@pytest.fixture(scope="session")
def f2():
    return binary_tree(2)


@pytest.fixture(scope="session")
def avar_f1(f1):
    return avar_scenario_set(f1, F(1, 2))


@pytest.fixture(scope="session")
def avar_f2(f2):
    return avar_scenario_set(f2, F(1, 2))


@pytest.fixture(scope="session")
def f3():
    return f3_numeraire()


@pytest.fixture(scope="session")
def trinomial():
    return trinomial_emm_fixture()


@pytest.fixture(scope="session")
def f4():
    return f4_market()


@pytest.fixture(scope="session")
def fixtures_dir():
    return Path(__file__).parent.parent / "fixtures"
