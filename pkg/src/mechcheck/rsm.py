"""The replica-surrogate-matching transformation, computed exactly.

Each agent's reported type is matched against sampled "replica" types in
an internal VCG market whose goods are sampled "surrogate" types; the
matched surrogate is what actually enters the allocation algorithm, and
the market's Clarke payment is what the agent is charged.  All weights
here are exact expectations (the idealized regime), so every distribution
below is a finite object with rational masses.

Agent 1 is the distinguished position in :func:`util` and
:func:`my_util`; other positions are reached through
:func:`mechcheck.core.rotate_to_front`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

from .core import AgentType, Scenario, insert_at, run_algorithm
from .exactdist import ExactDist, product
from .vcg import MatchingResult, vcg_matching


@dataclass(frozen=True, order=True)
class Coins:
    """One realization of the matching randomness for a single agent.

    ``replicas_rest`` are the m-1 sampled replica types; the agent's
    report fills 1-based ``slot`` to complete the replica profile.
    ``surrogates`` are the m sampled goods.
    """

    replicas_rest: Tuple[AgentType, ...]
    surrogates: Tuple[AgentType, ...]
    slot: int


@dataclass(frozen=True)
class SurrogatePayment:
    """The surrogate submitted in the agent's place, and the charge."""

    surrogate: AgentType
    payment: Fraction


WeightTable = Dict[Tuple[AgentType, AgentType], Fraction]


def rsmcoins(scenario: Scenario) -> ExactDist:
    """Joint distribution of the matching randomness.

    m-1 replica samples and m surrogate samples, all i.i.d. from the
    prior, plus an independent uniform slot; support size is
    ``|support(prior)|^(2m-1) * m``.
    """
    m = scenario.m
    rest = product([scenario.prior] * (m - 1))
    surrogates = product([scenario.prior] * m)
    slots = ExactDist.uniform(range(1, m + 1))
    return product([rest, surrogates, slots]).map(lambda v: Coins(v[0], v[1], v[2]))


def expwts(scenario: Scenario, j: int, r: AgentType, s: AgentType) -> Fraction:
    """Expected value to a type-``r`` agent of reporting ``s`` at slot ``j``.

    The expectation ranges over the other agents' types (i.i.d. from the
    prior) and any randomness of the algorithm itself.  These are the
    buyer/good weights of the internal matching market.
    """
    rest = product([scenario.prior] * (scenario.n - 1))

    def value_given_others(others):
        outcome_dist = run_algorithm(scenario, insert_at(others, j, s))
        return outcome_dist.expect(lambda o: scenario.valuation.value(r, o))

    return rest.expect(value_given_others)


def weight_table(scenario: Scenario, j: int) -> WeightTable:
    """All pairwise replica-for-surrogate weights for agent position ``j``.

    The weights do not depend on the coins, so one table per position
    serves every matching within an evaluation.
    """
    return {
        (r, s): expwts(scenario, j, r, s) for r in scenario.types for s in scenario.types
    }


def rsmdet(
    scenario: Scenario,
    j: int,
    coins: Coins,
    report: AgentType,
    weights: Optional[WeightTable] = None,
    match_cache: Optional[dict] = None,
) -> SurrogatePayment:
    """Deterministic core of the transformation for fixed coins.

    The report joins the sampled replicas at ``coins.slot``, the market
    is solved by VCG, and the result is the surrogate matched to that
    slot together with that slot's payment (selection is by the slot
    holding the report, not by the agent number ``j``, which only selects
    which position's weights are used).
    """
    if weights is None:
        weights = weight_table(scenario, j)
    replicas = insert_at(coins.replicas_rest, coins.slot, report)
    matrix = tuple(tuple(weights[(r, s)] for s in coins.surrogates) for r in replicas)
    result = _solve(matrix, match_cache)
    good = result.alloc[coins.slot - 1]
    return SurrogatePayment(coins.surrogates[good - 1], result.pays[coins.slot - 1])


def _solve(matrix, match_cache) -> MatchingResult:
    if match_cache is None:
        return vcg_matching(matrix)
    result = match_cache.get(matrix)
    if result is None:
        result = vcg_matching(matrix)
        match_cache[matrix] = result
    return result


def others(
    scenario: Scenario,
    j: int,
    t: AgentType,
    weights: Optional[WeightTable] = None,
    match_cache: Optional[dict] = None,
) -> ExactDist:
    """Distribution of the surrogate produced for agent ``j`` of type ``t``.

    Computed directly from the definition (coins, then matching), so the
    distribution-preservation property remains something the checkers
    verify rather than assume.
    """
    if weights is None:
        weights = weight_table(scenario, j)
    cache = {} if match_cache is None else match_cache
    return rsmcoins(scenario).map(
        lambda coins: rsmdet(scenario, j, coins, t, weights, cache).surrogate
    )


OtherMoves = Callable[[int, AgentType], ExactDist]


def util(
    scenario: Scenario,
    othermoves: OtherMoves,
    truety: AgentType,
    bid: AgentType,
) -> Fraction:
    """Expected utility of agent 1 with true type ``truety`` reporting ``bid``.

    ``othermoves(j, t)`` gives the surrogate distribution that agent
    ``j`` (2..n) submits when their sampled type is ``t``.  The result is
    the exact expectation, over the agent's own coins, of the value of
    the final outcome minus the matching payment.
    """
    n = scenario.n
    weights = weight_table(scenario, 1)
    cache: dict = {}
    other_surrogates = [
        scenario.prior.bind(lambda t, j=j: othermoves(j, t)) for j in range(2, n + 1)
    ]
    joint = product(other_surrogates)

    def value_if_matched(surrogate):
        def value_given_rest(rest):
            outcome_dist = run_algorithm(scenario, (surrogate,) + rest)
            return outcome_dist.expect(lambda o: scenario.valuation.value(truety, o))

        return joint.expect(value_given_rest)

    value_by_surrogate = {s: value_if_matched(s) for s in scenario.types}

    def net(coins):
        matched = rsmdet(scenario, 1, coins, bid, weights, cache)
        return value_by_surrogate[matched.surrogate] - matched.payment

    return rsmcoins(scenario).expect(net)


def my_util(scenario: Scenario, truety: AgentType, bid: AgentType) -> Fraction:
    """Expected utility of agent 1 when everyone else plays the mechanism.

    Every other agent's move is their own surrogate transformation
    applied to a fresh prior draw.
    """
    return util(scenario, surrogate_transforms(scenario), truety, bid)


def surrogate_transforms(scenario: Scenario) -> OtherMoves:
    """Precomputed ``others`` tables for agent positions 2..n.

    Returns a callable suitable as the ``othermoves`` argument of
    :func:`util`; each position shares one weight table and one matching
    cache across all input types.
    """
    table: Dict[int, Dict[AgentType, ExactDist]] = {}
    for j in range(2, scenario.n + 1):
        weights = weight_table(scenario, j)
        cache: dict = {}
        table[j] = {
            t: others(scenario, j, t, weights, cache) for t in scenario.prior.support()
        }

    def moves(j: int, t: AgentType) -> ExactDist:
        return table[j][t]

    return moves
