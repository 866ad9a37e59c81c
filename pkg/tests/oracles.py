"""Independent brute-force oracles.

Everything here is written with plain loops, dicts, and Fractions so the
values the suite asserts against are computed on a path that shares no
code with the library: no ExactDist, no matching solver, no utility
pipeline.  Restricted to the instance shapes the tests actually use
(deterministic welfare-max or constant algorithms, two replicas for the
matching oracle).
"""

from fractions import Fraction
from itertools import product as iterproduct

from mechcheck import Constant, WelfareMax


def oracle_algorithm(scenario, profile):
    """Outcome of the scenario's algorithm, recomputed from scratch."""
    if isinstance(scenario.algorithm, Constant):
        return scenario.algorithm.outcome
    assert isinstance(scenario.algorithm, WelfareMax)
    best, best_welfare = None, None
    for o in scenario.outcomes:
        welfare = sum(
            (scenario.valuation.value(t, o) for t in profile), Fraction(0)
        )
        if best is None or welfare > best_welfare:
            best, best_welfare = o, welfare
    return best


def prior_items(scenario):
    return [(t, scenario.prior.prob(t)) for t in scenario.prior.support()]


def oracle_expwts(scenario, j, r, s):
    """Expected value by direct profile enumeration."""
    total = Fraction(0)
    for combo in iterproduct(prior_items(scenario), repeat=scenario.n - 1):
        others = tuple(t for t, _ in combo)
        mass = Fraction(1)
        for _, p in combo:
            mass *= p
        profile = others[: j - 1] + (s,) + others[j - 1 :]
        total += mass * scenario.valuation.value(r, oracle_algorithm(scenario, profile))
    return total


def oracle_match_2x2(w):
    """Two-buyer matching and Clarke payments spelled out by hand.

    Returns 1-based alloc and pays; ties go to the identity assignment.
    """
    straight = w[0][0] + w[1][1]
    crossed = w[0][1] + w[1][0]
    if straight >= crossed:
        alloc = (1, 2)
        chosen = straight
    else:
        alloc = (2, 1)
        chosen = crossed
    best_without_1 = max(w[1][0], w[1][1])
    best_without_2 = max(w[0][0], w[0][1])
    others_at_chosen_1 = chosen - w[0][alloc[0] - 1]
    others_at_chosen_2 = chosen - w[1][alloc[1] - 1]
    return alloc, (best_without_1 - others_at_chosen_1, best_without_2 - others_at_chosen_2)


def oracle_surrogate_payment(scenario, j, replicas_rest, surrogates, slot, report):
    """Straight-line two-replica surrogate selection."""
    assert scenario.m == 2
    replicas = list(replicas_rest)
    replicas.insert(slot - 1, report)
    w = [
        [oracle_expwts(scenario, j, rep, s) for s in surrogates]
        for rep in replicas
    ]
    alloc, pays = oracle_match_2x2(w)
    return surrogates[alloc[slot - 1] - 1], pays[slot - 1]


def oracle_coins(scenario):
    """All (replicas_rest, surrogates, slot, mass) tuples, m = 2."""
    assert scenario.m == 2
    out = []
    for (r_rest, p_rest) in prior_items(scenario):
        for s_combo in iterproduct(prior_items(scenario), repeat=2):
            surrogates = tuple(t for t, _ in s_combo)
            p_s = Fraction(1)
            for _, p in s_combo:
                p_s *= p
            for slot in (1, 2):
                out.append(((r_rest,), surrogates, slot, p_rest * p_s * Fraction(1, 2)))
    return out


def oracle_my_util(scenario, truety, bid):
    """One giant weighted sum over every random choice in the mechanism.

    Expands the agent's coins, each other agent's type draw, and each
    other agent's own coins; supports n = 2, m = 2 and a deterministic
    algorithm.
    """
    assert scenario.n == 2 and scenario.m == 2
    total = Fraction(0)
    for rest, surrogates, slot, mass in oracle_coins(scenario):
        my_surrogate, my_payment = oracle_surrogate_payment(
            scenario, 1, rest, surrogates, slot, bid
        )
        for other_type, p_other in prior_items(scenario):
            for rest2, surrogates2, slot2, mass2 in oracle_coins(scenario):
                other_surrogate, _ = oracle_surrogate_payment(
                    scenario, 2, rest2, surrogates2, slot2, other_type
                )
                outcome = oracle_algorithm(scenario, (my_surrogate, other_surrogate))
                value = scenario.valuation.value(truety, outcome)
                total += mass * p_other * mass2 * (value - my_payment)
    return total


def oracle_matching_weight(w):
    """Maximum matching weight by direct Fraction permutation scan."""
    m = len(w)
    best = None
    for perm in iterproduct(*[range(m)] * m):
        if len(set(perm)) != m:
            continue
        total = sum((Fraction(w[j][perm[j]]) for j in range(m)), Fraction(0))
        if best is None or total > best:
            best = total
    return best
