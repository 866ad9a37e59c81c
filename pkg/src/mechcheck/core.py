"""Scenario data model shared by every checker.

A :class:`Scenario` bundles a finite mechanism-design instance: agent
count, replica count, type space, prior, outcome space, valuation table,
and the allocation algorithm under test.  Types and outcomes are interned
small integers with display labels, so all tables are dense and indexing
is O(1); agent and slot indices are 1-based throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import product as _iterproduct
from typing import Mapping, Sequence, Tuple

from .exactdist import ExactDist


class BadSlotError(IndexError):
    """A 1-based slot or agent index is out of range."""


class IncompleteAlgorithmError(LookupError):
    """A table algorithm has no row for the requested type profile."""


@dataclass(frozen=True, order=True)
class AgentType:
    """A private type: an index into the scenario's type table."""

    id: int
    label: str = ""

    def __repr__(self) -> str:
        return f"AgentType({self.id}, {self.label!r})"


@dataclass(frozen=True, order=True)
class Outcome:
    """A social outcome: an index into the scenario's outcome table."""

    id: int
    label: str = ""

    def __repr__(self) -> str:
        return f"Outcome({self.id}, {self.label!r})"


Profile = Tuple[AgentType, ...]


class Valuation:
    """Dense type-by-outcome table of rational values.

    ``value(t, o)`` is the worth of outcome ``o`` to an agent of type
    ``t``; the table is shared by all agents, who differ only through
    their types.
    """

    def __init__(self, table: Sequence[Sequence]) -> None:
        self._table = tuple(tuple(Fraction(x) for x in row) for row in table)
        if not self._table or not self._table[0]:
            raise ValueError("valuation table must be non-empty")
        if len({len(row) for row in self._table}) != 1:
            raise ValueError("valuation table rows have unequal lengths")

    def value(self, t: AgentType, o: Outcome) -> Fraction:
        return self._table[t.id][o.id]

    @property
    def table(self) -> tuple:
        return self._table

    @property
    def num_types(self) -> int:
        return len(self._table)

    @property
    def num_outcomes(self) -> int:
        return len(self._table[0])

    def bounds(self) -> Tuple[Fraction, Fraction]:
        """(min, max) over all table cells."""
        cells = [x for row in self._table for x in row]
        return min(cells), max(cells)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Valuation):
            return NotImplemented
        return self._table == other._table

    def __repr__(self) -> str:
        return f"Valuation({self._table!r})"


class Algorithm:
    """An allocation rule: maps a full profile of reported types to an
    exact distribution over outcomes (a point mass when deterministic)."""

    def outcome_dist(self, scenario: "Scenario", profile: Profile) -> ExactDist:
        raise NotImplementedError

    def validate(self, scenario: "Scenario") -> None:
        """Check totality over ``types^n``; raise ValueError if not."""


@dataclass(frozen=True)
class WelfareMax(Algorithm):
    """Pick the outcome maximizing the summed value of the reported
    types; ties go to the lowest outcome id."""

    def outcome_dist(self, scenario, profile):
        best = None
        best_welfare = None
        for o in scenario.outcomes:
            welfare = Fraction(0)
            for t in profile:
                welfare += scenario.valuation.value(t, o)
            if best is None or welfare > best_welfare:
                best, best_welfare = o, welfare
        return ExactDist.point(best)


@dataclass(frozen=True)
class Constant(Algorithm):
    """Ignore the profile and return a fixed outcome."""

    outcome: Outcome

    def outcome_dist(self, scenario, profile):
        return ExactDist.point(self.outcome)

    def validate(self, scenario):
        if self.outcome not in scenario.outcomes:
            raise ValueError(f"constant outcome {self.outcome!r} not in outcome table")


@dataclass(frozen=True)
class DeterministicTable(Algorithm):
    """Explicit profile-to-outcome map."""

    rows: Mapping[Profile, Outcome]

    def outcome_dist(self, scenario, profile):
        try:
            return ExactDist.point(self.rows[profile])
        except KeyError:
            raise IncompleteAlgorithmError(f"no table row for profile {profile!r}") from None

    def validate(self, scenario):
        _validate_table(self.rows, scenario)
        for profile, outcome in self.rows.items():
            if outcome not in scenario.outcomes:
                raise ValueError(f"table row {profile!r} maps to unknown outcome {outcome!r}")


@dataclass(frozen=True)
class RandomizedTable(Algorithm):
    """Explicit profile-to-outcome-distribution map."""

    rows: Mapping[Profile, ExactDist]

    def outcome_dist(self, scenario, profile):
        try:
            return self.rows[profile]
        except KeyError:
            raise IncompleteAlgorithmError(f"no table row for profile {profile!r}") from None

    def validate(self, scenario):
        _validate_table(self.rows, scenario)
        outcomes = set(scenario.outcomes)
        for profile, dist in self.rows.items():
            if not set(dist.support()) <= outcomes:
                raise ValueError(f"table row {profile!r} has support outside the outcome table")


@dataclass(frozen=True)
class Rotated(Algorithm):
    """Evaluate ``inner`` with the first reported type moved to ``slot``.

    ``Rotated(A, j)`` applied to ``(x, r_1, .., r_{n-1})`` is
    ``A(r_1, .., r_{j-1}, x, r_j, .., r_{n-1})``: the wrapper makes the
    distinguished first position stand for original position ``j``.
    """

    inner: Algorithm
    slot: int

    def outcome_dist(self, scenario, profile):
        return self.inner.outcome_dist(scenario, insert_at(profile[1:], self.slot, profile[0]))

    def validate(self, scenario):
        self.inner.validate(scenario)


def _validate_table(rows: Mapping, scenario: "Scenario") -> None:
    for profile in _iterproduct(scenario.types, repeat=scenario.n):
        if profile not in rows:
            raise ValueError(f"algorithm table is missing a row for profile {profile!r}")


@dataclass(frozen=True)
class Scenario:
    """A finite mechanism-design instance.

    ``n`` agents report types from ``types`` drawn i.i.d. from ``prior``;
    ``algorithm`` maps a length-``n`` profile to (a distribution over)
    ``outcomes``; the replica-surrogate construction uses ``m`` replicas.
    """

    n: int
    m: int
    types: Tuple[AgentType, ...]
    outcomes: Tuple[Outcome, ...]
    prior: ExactDist
    valuation: Valuation
    algorithm: Algorithm

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if self.n < 1:
            raise ValueError("agent count must be at least 1")
        if self.m < 1:
            raise ValueError("replica count must be at least 1")
        for i, t in enumerate(self.types):
            if t.id != i:
                raise ValueError(f"type table out of order at position {i}: {t!r}")
        for i, o in enumerate(self.outcomes):
            if o.id != i:
                raise ValueError(f"outcome table out of order at position {i}: {o!r}")
        if not set(self.prior.support()) <= set(self.types):
            raise ValueError("prior has support outside the type table")
        if self.valuation.num_types != len(self.types):
            raise ValueError("valuation table row count differs from the type count")
        if self.valuation.num_outcomes != len(self.outcomes):
            raise ValueError("valuation table column count differs from the outcome count")
        self.algorithm.validate(self)


def insert_at(rest: Sequence[AgentType], slot: int, x) -> Profile:
    """Insert ``x`` at 1-based ``slot`` of the length n-1 sequence ``rest``."""
    rest = tuple(rest)
    if not 1 <= slot <= len(rest) + 1:
        raise BadSlotError(f"slot {slot} out of range 1..{len(rest) + 1}")
    return rest[: slot - 1] + (x,) + rest[slot - 1 :]


def remove_at(profile: Sequence[AgentType], slot: int) -> Profile:
    """Drop the entry at 1-based ``slot``; inverse of :func:`insert_at`."""
    profile = tuple(profile)
    if not 1 <= slot <= len(profile):
        raise BadSlotError(f"slot {slot} out of range 1..{len(profile)}")
    return profile[: slot - 1] + profile[slot:]


def run_algorithm(scenario: Scenario, profile: Sequence[AgentType]) -> ExactDist:
    """Evaluate the scenario's algorithm on a full profile."""
    profile = tuple(profile)
    if len(profile) != scenario.n:
        raise ValueError(f"profile length {len(profile)} differs from agent count {scenario.n}")
    return scenario.algorithm.outcome_dist(scenario, profile)


def rotate_to_front(scenario: Scenario, j: int) -> Scenario:
    """Scenario whose algorithm treats the first report as original agent ``j``.

    Incentive properties of agent ``j`` under the original algorithm are
    exactly the properties of agent 1 under the rotated one, so checkers
    only ever need to reason about the first position.
    """
    if not 1 <= j <= scenario.n:
        raise BadSlotError(f"agent index {j} out of range 1..{scenario.n}")
    return replace(scenario, algorithm=Rotated(scenario.algorithm, j))
