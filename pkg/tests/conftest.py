from fractions import Fraction

import pytest

from mechcheck import (
    AgentType,
    Constant,
    ExactDist,
    Outcome,
    Scenario,
    Valuation,
    WelfareMax,
)


def make_scenario(vtable, n=2, m=2, prior_masses=None, algorithm=None, labels=None):
    """Scenario over len(vtable) types and len(vtable[0]) outcomes."""
    if labels is None:
        labels = [f"t{i}" for i in range(len(vtable))]
    types = tuple(AgentType(i, label) for i, label in enumerate(labels))
    outcomes = tuple(Outcome(i, f"o{i}") for i in range(len(vtable[0])))
    if prior_masses is None:
        prior = ExactDist.uniform(types)
    else:
        prior = ExactDist(zip(types, prior_masses))
    return Scenario(
        n=n,
        m=m,
        types=types,
        outcomes=outcomes,
        prior=prior,
        valuation=Valuation(vtable),
        algorithm=algorithm or WelfareMax(),
    )


# the two-type instance used throughout: welfare-max is profile-sensitive
# (low-low picks o0, anything else picks o1)
CANONICAL_TABLE = [[1, 0], [0, 2]]


@pytest.fixture
def canonical():
    return make_scenario(CANONICAL_TABLE, labels=["low", "high"])


@pytest.fixture
def skewed():
    return make_scenario(
        CANONICAL_TABLE,
        prior_masses=[Fraction(1, 3), Fraction(2, 3)],
        labels=["low", "high"],
    )


@pytest.fixture
def constant_scenario():
    sc = make_scenario(CANONICAL_TABLE, labels=["low", "high"])
    return make_scenario(
        CANONICAL_TABLE, labels=["low", "high"], algorithm=Constant(sc.outcomes[0])
    )
