from fractions import Fraction

import pytest

import mechcheck.checker as checker_module
from mechcheck import (
    BudgetExceededError,
    CheckConfig,
    Constant,
    ExactDist,
    MatchingGrid,
    MatchingResult,
    SingleItemGrid,
    check_bic,
    check_dist_preservation,
    check_stage_chain,
    check_vcg_perm,
    check_vcg_truth,
    dist_equal,
    enumeration_size,
    estimate_utility,
    first_price_bic_control,
    my_util,
    random_rational_matrices,
    stage_distributions,
    util_first_price,
    vcg_matching,
    weight_table,
)
from mechcheck.rsm import rsmcoins
from mechcheck.core import insert_at

from conftest import make_scenario


EXACT = CheckConfig()


class TestVcgTruthSingleItem:
    def test_second_price_grid_passes(self):
        report = check_vcg_truth(SingleItemGrid(), EXACT)
        assert report.verdict == "pass"
        assert not report.witnesses
        # bidders k contribute |V|^k * k * (|V|-1) ordered deviations
        assert report.stats["instances"] == 4**2 * 2 * 3 + 4**3 * 3 * 3

    def test_first_price_fails_with_reproducible_witness(self):
        report = check_vcg_truth(SingleItemGrid(), EXACT, rule="first-price")
        assert report.verdict == "fail"
        assert report.witnesses
        # the classical instance: true values (2, 1), bidder 1 shades to 1,
        # wins the tie and keeps a unit of surplus
        margins = {
            (w.inputs["bids"], w.inputs["deviator"], w.inputs["deviation"]): w.margin
            for w in report.witnesses
        }
        assert margins[("[2, 1]", "1", "1")] == Fraction(-1)
        # every witness re-evaluates to its reported negative margin
        for w in report.witnesses:
            assert w.margin == w.left - w.right < 0

    def test_single_bidder_grid_trivially_truthful(self):
        report = check_vcg_truth(SingleItemGrid(bidders=(1,)), EXACT)
        assert report.verdict == "pass"


class TestVcgTruthMatching:
    def test_two_by_two_grid_passes(self):
        report = check_vcg_truth(MatchingGrid(sizes=(2,)), EXACT)
        assert report.verdict == "pass"
        e = len(MatchingGrid().entries)
        assert report.stats["instances"] == e**4 * 2 * (e**2 - 1)
        assert report.stats["matrices"] == e**4

    def test_first_price_rule_rejected(self):
        with pytest.raises(ValueError):
            check_vcg_truth(MatchingGrid(), EXACT, rule="first-price")

    def test_jobs_do_not_change_the_report(self):
        serial = check_vcg_truth(MatchingGrid(sizes=(2,)), CheckConfig(jobs=1))
        parallel = check_vcg_truth(MatchingGrid(sizes=(2,)), CheckConfig(jobs=4))
        assert serial == parallel

    def test_sweep_agrees_with_public_solver(self):
        # spot-check the scaled-integer sweep against vcg_matching
        entries = MatchingGrid().entries
        w = [[entries[0], entries[3]], [entries[2], entries[1]]]
        result = vcg_matching(w)
        report = check_vcg_truth(MatchingGrid(sizes=(2,)), EXACT)
        assert report.verdict == "pass" and result.pays[0] >= 0


class TestVcgPerm:
    def test_random_grid_passes(self):
        matrices = random_rational_matrices(500, (1, 2, 3, 4, 5, 6), seed=1)
        report = check_vcg_perm(matrices, EXACT)
        assert report.verdict == "pass"
        assert report.stats["instances"] == 500

    def test_empty_grid_passes_with_zero_instances(self):
        report = check_vcg_perm([], EXACT)
        assert report.verdict == "pass"
        assert report.stats["instances"] == 0

    def test_corrupted_solver_detected(self, monkeypatch):
        def broken(matrix):
            return MatchingResult((1, 1), (Fraction(0), Fraction(0)))

        monkeypatch.setattr(checker_module, "vcg_matching", broken)
        report = check_vcg_perm([[[1, 2], [3, 4]]], EXACT)
        assert report.verdict == "fail"
        assert report.witnesses[0].margin < 0


class TestDistPreservation:
    def test_single_replica_any_scenario(self):
        sc = make_scenario([[1, 0], [0, 2]], m=1)
        report = check_dist_preservation(sc, EXACT)
        assert report.verdict == "pass"

    def test_canonical_and_skewed(self, canonical, skewed):
        for sc in (canonical, skewed):
            report = check_dist_preservation(sc, EXACT)
            assert report.verdict == "pass"
            s = len(sc.prior.entries)
            coin_outcomes = s ** (2 * sc.m - 1) * sc.m
            assert report.stats["coin_outcomes"] == coin_outcomes
            assert report.stats["instances"] == sc.n * s * coin_outcomes

    def test_budget_exceeded(self, canonical):
        with pytest.raises(BudgetExceededError):
            check_dist_preservation(canonical, CheckConfig(budget=3))

    def test_montecarlo_mode(self, canonical):
        report = check_dist_preservation(
            canonical, CheckConfig(mode="mc", samples=4000, seed=5)
        )
        assert report.verdict == "estimated"
        assert report.stats["within_tolerance"]

    def test_detects_broken_transform(self, canonical, monkeypatch):
        # corrupt the surrogate transform to always return the low type
        low = canonical.types[0]
        monkeypatch.setattr(
            checker_module,
            "others",
            lambda sc, j, t, weights=None, cache=None: ExactDist.point(low),
        )
        report = check_dist_preservation(canonical, EXACT)
        assert report.verdict == "fail"
        assert all(w.margin < 0 for w in report.witnesses)


class TestStageChain:
    def test_canonical_all_stages_equal_prior(self, canonical):
        report = check_stage_chain(canonical, EXACT)
        assert report.verdict == "pass"
        assert report.stats["comparisons"] == 4 * canonical.n
        for j in (1, 2):
            for stage in stage_distributions(canonical, j):
                assert dist_equal(stage, canonical.prior)

    def test_skewed_prior(self, skewed):
        assert check_stage_chain(skewed, EXACT).verdict == "pass"

    def test_budget_exceeded(self, canonical):
        with pytest.raises(BudgetExceededError):
            check_stage_chain(canonical, CheckConfig(budget=3))

    def test_montecarlo_mode(self, canonical):
        report = check_stage_chain(canonical, CheckConfig(mode="mc", samples=2500, seed=9))
        assert report.verdict == "estimated"
        assert report.stats["within_tolerance"]

    def test_greedy_slot_corruption_detected(self, skewed, monkeypatch):
        """A corrupted sampler that always returns the best-paid replica's
        surrogate is caught by the chain comparison.

        (A corruption that merely hard-codes the returned slot is
        distribution-neutral here: with i.i.d. replicas and surrogates
        every fixed slot's match has the same law, which the passing
        checks above already certify.)
        """
        real = stage_distributions

        def corrupted(scenario, j):
            stage1, stage2, stage3, stage4 = real(scenario, j)
            weights = weight_table(scenario, j)

            def greedy(replicas, surrogates):
                matrix = tuple(tuple(weights[(r, s)] for s in surrogates) for r in replicas)
                result = vcg_matching(matrix)
                best_slot = max(
                    range(1, len(replicas) + 1),
                    key=lambda i: (weights[(replicas[i - 1], surrogates[result.alloc[i - 1] - 1])], -i),
                )
                return surrogates[result.alloc[best_slot - 1] - 1]

            coins = rsmcoins(scenario)
            broken3 = scenario.prior.bind(
                lambda ot: coins.map(
                    lambda c: greedy(insert_at(c.replicas_rest, c.slot, ot), c.surrogates)
                )
            )
            return stage1, stage2, broken3, stage4

        monkeypatch.setattr(checker_module, "stage_distributions", corrupted)
        report = check_stage_chain(skewed, EXACT)
        assert report.verdict == "fail"
        broken_pairs = {w.inputs["stages"] for w in report.witnesses}
        assert "stage2=stage3" in broken_pairs


class TestBic:
    def test_canonical_passes_with_zero_diagonal(self, canonical):
        report = check_bic(canonical, EXACT)
        assert report.verdict == "pass"
        margins = report.stats["margins"]
        for j in (1, 2):
            for t in ("low", "high"):
                assert margins[f"agent={j} true={t} bid={t}"] == "0"
        assert report.stats["pairs"] == 2 * 4

    def test_jobs_do_not_change_the_report(self, canonical):
        serial = check_bic(canonical, CheckConfig(jobs=1))
        parallel = check_bic(canonical, CheckConfig(jobs=4))
        assert serial == parallel

    def test_budget_exceeded(self, canonical):
        with pytest.raises(BudgetExceededError):
            check_bic(canonical, CheckConfig(budget=3))

    def test_montecarlo_estimates(self, canonical):
        report = check_bic(canonical, CheckConfig(mode="mc", samples=3000, seed=2))
        assert report.verdict == "estimated"
        assert not report.stats["suspected_violations"]

    def test_instance_count_closed_form(self, skewed):
        report = check_bic(skewed, EXACT)
        s = len(skewed.prior.entries)
        assert report.stats["instances"] == skewed.n * s * s
        assert report.stats["coin_outcomes"] == s ** (2 * skewed.m - 1) * skewed.m


class TestFirstPriceControl:
    def test_violation_found_on_first_scenario(self, canonical, skewed):
        report = first_price_bic_control([canonical, skewed], EXACT)
        assert report.verdict == "fail"
        assert report.stats["scenarios_tried"] == 1
        w = report.witnesses[0]
        assert w.margin < 0

    def test_witness_reproduces_through_public_api(self, canonical):
        from mechcheck import surrogate_transforms

        report = first_price_bic_control([canonical], EXACT)
        w = report.witnesses[0]
        transforms = surrogate_transforms(canonical)
        by_label = {t.label: t for t in canonical.types}
        t = by_label[w.inputs["true_type"]]
        bid = by_label[w.inputs["bid"]]
        left = util_first_price(canonical, transforms, t, t)
        right = util_first_price(canonical, transforms, t, bid)
        assert left == w.left and right == w.right and left - right < 0

    def test_budget_stop_documented(self, canonical):
        report = first_price_bic_control([canonical], CheckConfig(budget=2))
        assert report.verdict == "pass"
        assert report.stats["budget_stopped"]

    def test_truthful_mechanism_would_exhaust_grid(self, constant_scenario):
        # constant algorithm with one replica: report never matters, so the
        # corrupted payment rule still cannot be gamed and the grid exhausts
        sc = make_scenario([[1, 1], [1, 1]], m=1, algorithm=constant_scenario.algorithm)
        report = first_price_bic_control([sc], EXACT)
        assert report.verdict == "pass"
        assert report.stats["exhausted"]


class TestEstimateUtility:
    def test_requires_montecarlo(self, canonical):
        with pytest.raises(ValueError):
            estimate_utility(canonical, canonical.types[0], canonical.types[0], EXACT)

    def test_seed_determinism(self, canonical):
        cfg = CheckConfig(mode="mc", samples=500, seed=11)
        first = estimate_utility(canonical, canonical.types[1], canonical.types[0], cfg)
        second = estimate_utility(canonical, canonical.types[1], canonical.types[0], cfg)
        assert first == second

    def test_constant_scenario_zero_variance(self):
        base = make_scenario([[1, 1], [1, 1]])
        sc = make_scenario([[1, 1], [1, 1]], algorithm=Constant(base.outcomes[0]))
        cfg = CheckConfig(mode="mc", samples=200, seed=3)
        estimate, radius = estimate_utility(sc, sc.types[0], sc.types[1], cfg)
        assert estimate == my_util(sc, sc.types[0], sc.types[1]) == 1
        assert radius == 0

    def test_estimate_near_exact(self, canonical):
        cfg = CheckConfig(mode="mc", samples=20_000, seed=13)
        t = canonical.types[1]
        estimate, radius = estimate_utility(canonical, t, t, cfg)
        exact = my_util(canonical, t, t)
        assert abs(estimate - exact) < radius


class TestBudgetFormula:
    def test_enumeration_size(self, canonical):
        assert enumeration_size(canonical) == 2**3 * 2 * 2
        big = make_scenario([[1, 0], [0, 2], [1, 1]], n=3, m=3)
        assert enumeration_size(big) == 3**5 * 3 * 3**2
