from fractions import Fraction
from itertools import product as iterproduct

import pytest

from mechcheck import (
    Coins,
    Constant,
    ExactDist,
    dist_equal,
    expwts,
    my_util,
    others,
    rsmcoins,
    rsmdet,
    surrogate_transforms,
    util,
    weight_table,
)

from conftest import make_scenario
from oracles import (
    oracle_coins,
    oracle_expwts,
    oracle_my_util,
    oracle_surrogate_payment,
)


class TestRsmCoins:
    def test_single_replica_structure(self, canonical):
        sc = make_scenario([[1, 0], [0, 2]], m=1)
        coins = rsmcoins(sc)
        assert len(coins) == 2
        for value, mass in coins:
            assert value.replicas_rest == ()
            assert value.slot == 1
            assert len(value.surrogates) == 1
            assert mass == Fraction(1, 2)

    def test_two_replica_support(self, canonical):
        coins = rsmcoins(canonical)
        assert len(coins) == 2**3 * 2
        assert all(mass == Fraction(1, 16) for _, mass in coins)

    def test_support_size_closed_form(self):
        sc = make_scenario([[1, 0], [0, 2], [1, 1]], m=2, n=1)
        assert len(rsmcoins(sc)) == 3 ** (2 * 2 - 1) * 2

    def test_slot_marginal_uniform(self, canonical):
        marginal = rsmcoins(canonical).map(lambda c: c.slot)
        assert dist_equal(marginal, ExactDist.uniform([1, 2]))


class TestExpwts:
    def test_single_agent_has_no_others(self):
        sc = make_scenario([[1, 0], [0, 2]], n=1)
        low, high = sc.types
        # A(low) = o0, A(high) = o1
        assert expwts(sc, 1, low, low) == 1
        assert expwts(sc, 1, low, high) == 0
        assert expwts(sc, 1, high, low) == 0
        assert expwts(sc, 1, high, high) == 2

    def test_constant_algorithm_ignores_report(self, constant_scenario):
        sc = constant_scenario
        for j in (1, 2):
            for r in sc.types:
                for s in sc.types:
                    assert expwts(sc, j, r, s) == sc.valuation.value(r, sc.outcomes[0])

    def test_single_item_style_instance(self):
        # two value-levels on a win/lose outcome pair; the high type's
        # expected value for reporting high is its full value
        sc = make_scenario([[1, 0], [2, 0]], labels=["one", "two"])
        one, two = sc.types
        assert expwts(sc, 1, two, two) == 2

    def test_matches_enumeration_oracle(self, canonical, skewed):
        for sc in (canonical, skewed):
            for j in (1, 2):
                for r in sc.types:
                    for s in sc.types:
                        assert expwts(sc, j, r, s) == oracle_expwts(sc, j, r, s)

    def test_canonical_values(self, canonical):
        low, high = canonical.types
        assert expwts(canonical, 1, low, low) == Fraction(1, 2)
        assert expwts(canonical, 1, low, high) == 0
        assert expwts(canonical, 1, high, high) == 2
        assert expwts(canonical, 1, high, low) == 1


class TestRsmdet:
    def test_single_replica_forced_match(self):
        sc = make_scenario([[1, 0], [0, 2]], m=1)
        low, high = sc.types
        for surrogate in sc.types:
            for report in sc.types:
                result = rsmdet(sc, 1, Coins((), (surrogate,), 1), report)
                assert result.surrogate == surrogate
                assert result.payment == 0

    def test_surrogate_always_from_coins(self, canonical):
        weights = weight_table(canonical, 1)
        for coins, _ in rsmcoins(canonical):
            for report in canonical.types:
                result = rsmdet(canonical, 1, coins, report, weights)
                assert result.surrogate in coins.surrogates
                assert result.payment >= 0

    def test_matches_straight_line_oracle(self, canonical, skewed):
        for sc in (canonical, skewed):
            for j in (1, 2):
                weights = weight_table(sc, j)
                for rest, surrogates, slot, _ in oracle_coins(sc):
                    for report in sc.types:
                        got = rsmdet(sc, j, Coins(rest, surrogates, slot), report, weights)
                        want_s, want_p = oracle_surrogate_payment(
                            sc, j, rest, surrogates, slot, report
                        )
                        assert got.surrogate == want_s
                        assert got.payment == want_p


class TestOthers:
    def test_single_replica_returns_prior(self):
        sc = make_scenario([[1, 0], [0, 2]], m=1)
        for j in (1, 2):
            for t in sc.types:
                assert dist_equal(others(sc, j, t), sc.prior)

    def test_distribution_preservation_uniform(self, canonical):
        for j in (1, 2):
            mixed = canonical.prior.bind(lambda t: others(canonical, j, t))
            assert dist_equal(mixed, canonical.prior)

    def test_distribution_preservation_skewed(self, skewed):
        for j in (1, 2):
            mixed = skewed.prior.bind(lambda t: others(skewed, j, t))
            assert dist_equal(mixed, skewed.prior)


class TestUtil:
    def test_constant_algorithm_single_replica(self):
        base = make_scenario([[1, 0], [0, 2]], m=1)
        sc = make_scenario(
            [[1, 0], [0, 2]], m=1, algorithm=Constant(base.outcomes[0])
        )
        moves = surrogate_transforms(sc)
        for truety in sc.types:
            expected = sc.valuation.value(truety, sc.outcomes[0])
            for bid in sc.types:
                assert util(sc, moves, truety, bid) == expected

    def test_flat_enumeration_oracle(self, canonical):
        for truety in canonical.types:
            for bid in canonical.types:
                assert my_util(canonical, truety, bid) == oracle_my_util(
                    canonical, truety, bid
                )

    def test_flat_enumeration_oracle_skewed(self, skewed):
        for truety in skewed.types:
            for bid in skewed.types:
                assert my_util(skewed, truety, bid) == oracle_my_util(skewed, truety, bid)

    def test_doubling_values_doubles_utility(self, canonical):
        doubled = make_scenario([[2, 0], [0, 4]], labels=["low", "high"])
        for truety, bid in iterproduct(range(2), repeat=2):
            assert my_util(doubled, doubled.types[truety], doubled.types[bid]) == 2 * my_util(
                canonical, canonical.types[truety], canonical.types[bid]
            )


class TestMyUtil:
    def test_truth_dominates_canonical(self, canonical):
        for t in canonical.types:
            truthful = my_util(canonical, t, t)
            for bid in canonical.types:
                assert truthful >= my_util(canonical, t, bid)

    def test_single_replica_report_is_ignored(self):
        sc = make_scenario([[1, 0], [0, 2]], m=1)
        for t in sc.types:
            values = {bid: my_util(sc, t, bid) for bid in sc.types}
            assert len(set(values.values())) == 1

    def test_single_agent_reduces_to_own_market(self):
        sc = make_scenario([[1, 0], [0, 2]], n=1)
        weights = weight_table(sc, 1)
        for t in sc.types:
            for bid in sc.types:
                def net(coins):
                    matched = rsmdet(sc, 1, coins, bid, weights)
                    outcome = sc.algorithm.outcome_dist(sc, (matched.surrogate,))
                    value = outcome.expect(lambda o: sc.valuation.value(t, o))
                    return value - matched.payment

                assert my_util(sc, t, bid) == rsmcoins(sc).expect(net)
