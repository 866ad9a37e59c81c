"""Property suites: exhaustive exact checks and Monte Carlo estimation.

Each checker enumerates every instance of a universally quantified
incentive or distribution property over a finite grid or scenario and
returns a :class:`CheckReport`.  Exact-mode verdicts are computed with
rational arithmetic and are deterministic: independent of worker count
and iteration order.  Monte Carlo mode never claims a proof; it reports
estimates with confidence radii and the verdict ``estimated``.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as _iterproduct
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .core import AgentType, Scenario, insert_at, rotate_to_front, run_algorithm
from .exactdist import ExactDist, dist_equal, product
from .rsm import (
    Coins,
    rsmcoins,
    rsmdet,
    others,
    surrogate_transforms,
    util,
    weight_table,
)
from .vcg import _brute_solve, is_permutation, vcg_general, vcg_matching


class BudgetExceededError(RuntimeError):
    """The exact enumeration would materialize more entries than allowed."""

    def __init__(self, estimate: int, budget: int):
        super().__init__(
            f"exact enumeration needs about {estimate} distribution entries, "
            f"budget is {budget}; rerun in montecarlo mode or raise the budget"
        )
        self.estimate = estimate
        self.budget = budget


@dataclass
class CheckConfig:
    """How a check is run.

    ``budget`` caps the estimated number of distribution entries an exact
    run may materialize.  ``confidence`` is the coverage level of Monte
    Carlo radii.
    """

    mode: str = "exact"
    samples: int = 100_000
    seed: int = 0
    jobs: int = 1
    budget: int = 10_000_000
    confidence: float = 0.99

    def __post_init__(self):
        if self.mode == "mc":
            self.mode = "montecarlo"
        if self.mode not in ("exact", "montecarlo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "montecarlo" and self.samples < 1:
            raise ValueError("montecarlo mode needs at least one sample")
        if self.jobs < 1:
            raise ValueError("worker count must be at least 1")


@dataclass(frozen=True)
class Witness:
    """A concrete property violation: the inputs and the exact margin.

    ``margin`` is ``left - right`` and is strictly negative; for boolean
    properties ``left``/``right`` are 0/1 indicators.
    """

    inputs: dict
    left: Fraction
    right: Fraction

    @property
    def margin(self) -> Fraction:
        return self.left - self.right


@dataclass
class CheckReport:
    """Verdict of one property check.

    ``verdict`` is ``pass``, ``fail`` or ``estimated``; it is ``fail``
    exactly when ``witnesses`` is nonempty.  ``stats`` holds instance
    counts (exact mode enumerates every element of the relevant product
    space, so the counts equal their closed forms), Monte Carlo
    estimates, and timing.
    """

    property_name: str
    verdict: str
    witnesses: List[Witness] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


# ---------------------------------------------------------------------------
# grids for the VCG checks


@dataclass(frozen=True)
class SingleItemGrid:
    """All single-item auctions with the given bidder counts and bid set."""

    bidders: Tuple[int, ...] = (2, 3)
    values: Tuple[Fraction, ...] = (Fraction(0), Fraction(1), Fraction(2), Fraction(3))


@dataclass(frozen=True)
class MatchingGrid:
    """All square weight matrices of the given sizes over an entry set."""

    sizes: Tuple[int, ...] = (2, 3)
    entries: Tuple[Fraction, ...] = (
        Fraction(0),
        Fraction(1, 2),
        Fraction(1),
        Fraction(2),
    )


def check_vcg_truth(grid, cfg: CheckConfig, rule: str = "vcg") -> CheckReport:
    """Truthfulness of the mechanism on every grid instance.

    For each instance, each deviating agent, and each single-row (or
    single-bid) deviation inside the grid, the deviator's utility under
    their true values must not beat truthful reporting.  ``rule`` selects
    the payment rule for single-item grids; ``first-price`` is the
    negative control where the winner pays their own bid.
    """
    if isinstance(grid, SingleItemGrid):
        return _check_truth_single_item(grid, cfg, rule)
    if isinstance(grid, MatchingGrid):
        if rule != "vcg":
            raise ValueError("matching grids only support the vcg rule")
        return _check_truth_matching(grid, cfg)
    raise TypeError(f"unsupported grid {grid!r}")


def _single_item_outcome(bids: Tuple[Fraction, ...], rule: str):
    """(winner index, payments) for one bid profile; ties to the lowest index."""
    k = len(bids)
    if rule == "vcg":
        values = [
            (lambda o, v=v, i=i: v if o == i else Fraction(0))
            for i, v in enumerate(bids)
        ]
        result = vcg_general(values, range(k))
        return result.outcome, result.prices
    if rule == "first-price":
        winner = max(range(k), key=lambda i: (bids[i], -i))
        pays = tuple(bids[i] if i == winner else Fraction(0) for i in range(k))
        return winner, pays
    raise ValueError(f"unknown payment rule {rule!r}")


def _check_truth_single_item(grid: SingleItemGrid, cfg: CheckConfig, rule: str) -> CheckReport:
    values = tuple(Fraction(v) for v in grid.values)
    witnesses = []
    instances = 0
    for k in grid.bidders:
        solved: dict = {}

        def outcome_of(bids):
            if bids not in solved:
                solved[bids] = _single_item_outcome(bids, rule)
            return solved[bids]

        for profile in _iterproduct(values, repeat=k):
            winner_t, pays_t = outcome_of(profile)
            for j in range(k):
                true_value = profile[j]
                utility_truth = (true_value if winner_t == j else Fraction(0)) - pays_t[j]
                for deviation in values:
                    if deviation == profile[j]:
                        continue
                    instances += 1
                    deviated = profile[:j] + (deviation,) + profile[j + 1 :]
                    winner_d, pays_d = outcome_of(deviated)
                    utility_dev = (true_value if winner_d == j else Fraction(0)) - pays_d[j]
                    if utility_truth < utility_dev:
                        witnesses.append(
                            Witness(
                                inputs={
                                    "bidders": str(k),
                                    "bids": _fmt_vector(profile),
                                    "deviator": str(j + 1),
                                    "deviation": str(deviation),
                                },
                                left=utility_truth,
                                right=utility_dev,
                            )
                        )
    stats = {"form": "single-item", "rule": rule, "instances": instances}
    return _verdict_report("vcg-truth", witnesses, stats)


def _check_truth_matching(grid: MatchingGrid, cfg: CheckConfig) -> CheckReport:
    entries = tuple(sorted(Fraction(e) for e in grid.entries))
    scale = 1
    for e in entries:
        scale = math.lcm(scale, e.denominator)
    scaled_entries = tuple(int(e * scale) for e in entries)

    units = []
    for m in grid.sizes:
        rows = tuple(_iterproduct(scaled_entries, repeat=m))
        for j in range(m):
            for first in rows if m > 1 else ((),):
                units.append((m, j, first, scaled_entries, scale))

    results = _pmap(_matching_truth_unit, units, cfg.jobs)

    witnesses = []
    instances = 0
    for unit_instances, unit_witnesses in results:
        instances += unit_instances
        witnesses.extend(unit_witnesses)
    stats = {
        "form": "matching",
        "rule": "vcg",
        "instances": instances,
        "matrices": sum(len(scaled_entries) ** (m * m) for m in grid.sizes),
    }
    return _verdict_report("vcg-truth", witnesses, stats)


def _matching_truth_unit(unit):
    """All deviations for one (size, deviator row, leading other-row) block.

    Works on integer-scaled weights: the truthfulness inequality is
    invariant under a positive common scaling.  The best deviation for a
    true row r is ``max over goods g of (r[g] - cheapest payment seen for
    g)``, so each block needs one solve per candidate row and a cheap scan
    per true row; candidates are only re-scanned when a violation exists.
    """
    m, j, first, scaled_entries, scale = unit
    rows = tuple(_iterproduct(scaled_entries, repeat=m))
    rest_positions = m - 1 - (1 if m > 1 else 0)
    witnesses = []
    instances = 0
    for rest in _iterproduct(rows, repeat=rest_positions):
        others_rows = (first,) + rest if m > 1 else ()
        prefix, suffix = others_rows[:j], others_rows[j:]
        menu = {}
        by_row = {}
        for candidate in rows:
            matrix = prefix + (candidate,) + suffix
            perm, total, without = _brute_solve(matrix)
            good = perm[j]
            pay = without[j] - (total - matrix[j][good])
            by_row[candidate] = (good, pay)
            if good not in menu or pay < menu[good]:
                menu[good] = pay
        for true_row in rows:
            instances += len(rows) - 1
            good_t, pay_t = by_row[true_row]
            utility_truth = true_row[good_t] - pay_t
            best_deviation = max(true_row[g] - p for g, p in menu.items())
            if best_deviation <= utility_truth:
                continue
            for candidate in rows:
                if candidate == true_row:
                    continue
                good_d, pay_d = by_row[candidate]
                utility_dev = true_row[good_d] - pay_d
                if utility_dev > utility_truth:
                    matrix = prefix + (true_row,) + suffix
                    witnesses.append(
                        Witness(
                            inputs={
                                "size": str(m),
                                "weights": _fmt_matrix(matrix, scale),
                                "deviator": str(j + 1),
                                "deviation_row": _fmt_vector(
                                    [Fraction(x, scale) for x in candidate]
                                ),
                            },
                            left=Fraction(utility_truth, scale),
                            right=Fraction(utility_dev, scale),
                        )
                    )
    return instances, witnesses


def check_vcg_perm(matrices: Iterable[Sequence[Sequence]], cfg: CheckConfig) -> CheckReport:
    """Every matching result must be a permutation of the goods."""
    matrices = list(matrices)
    chunks = _chunked(matrices, cfg.jobs)
    results = _pmap(_perm_unit, chunks, cfg.jobs)
    witnesses = [w for chunk_witnesses in results for w in chunk_witnesses]
    stats = {"instances": len(matrices)}
    return _verdict_report("vcg-perm", witnesses, stats)


def _perm_unit(matrices):
    witnesses = []
    for matrix in matrices:
        result = vcg_matching(matrix)
        if not is_permutation(result.alloc):
            witnesses.append(
                Witness(
                    inputs={
                        "weights": _fmt_matrix_fractions(matrix),
                        "alloc": str(list(result.alloc)),
                    },
                    left=Fraction(0),
                    right=Fraction(1),
                )
            )
    return witnesses


def random_rational_matrices(count: int, sizes: Sequence[int], seed: int):
    """Deterministic stream of random square matrices with small rational entries."""
    rng = random.Random(seed)
    for _ in range(count):
        m = rng.choice(list(sizes))
        yield [
            [Fraction(rng.randint(-8, 8), rng.randint(1, 6)) for _ in range(m)]
            for _ in range(m)
        ]


# ---------------------------------------------------------------------------
# scenario checks


def enumeration_size(scenario: Scenario) -> int:
    """Closed-form size of the coin space times the other-agent profiles.

    ``|support(prior)|^(2m-1) * m * |T|^(n-1)``: the dominating count of
    distribution entries an exact scenario check materializes.
    """
    s = len(scenario.prior.entries)
    return s ** (2 * scenario.m - 1) * scenario.m * len(scenario.types) ** (scenario.n - 1)


def _require_budget(scenario: Scenario, cfg: CheckConfig) -> None:
    estimate = enumeration_size(scenario)
    if estimate > cfg.budget:
        raise BudgetExceededError(estimate, cfg.budget)


def check_dist_preservation(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    """Feeding a prior-distributed type through the surrogate procedure
    must return a prior-distributed surrogate, at every agent position."""
    if cfg.mode == "exact":
        _require_budget(scenario, cfg)
        positions = list(range(1, scenario.n + 1))
        results = _pmap(_dist_preserve_unit, [(scenario, j) for j in positions], cfg.jobs)
        witnesses = [w for unit in results for w in unit]
        coin_outcomes = len(scenario.prior.entries) ** (2 * scenario.m - 1) * scenario.m
        stats = {
            "positions": scenario.n,
            "coin_outcomes": coin_outcomes,
            "instances": scenario.n * len(scenario.prior.entries) * coin_outcomes,
        }
        return _verdict_report("dist-preserve", witnesses, stats)
    return _mc_dist_preservation(scenario, cfg)


def _dist_preserve_unit(unit):
    scenario, j = unit
    weights = weight_table(scenario, j)
    cache: dict = {}
    surrogate_dist = scenario.prior.bind(
        lambda t: others(scenario, j, t, weights, cache)
    )
    return _dist_mismatch_witnesses(
        {"agent": str(j)}, surrogate_dist, scenario.prior
    )


def _dist_mismatch_witnesses(base_inputs, left_dist, right_dist):
    """One witness per support point where the left mass falls short."""
    if dist_equal(left_dist, right_dist):
        return []
    witnesses = []
    support = sorted(set(left_dist.support()) | set(right_dist.support()))
    for value in support:
        lp, rp = left_dist.prob(value), right_dist.prob(value)
        if lp < rp:
            inputs = dict(base_inputs)
            inputs["value"] = getattr(value, "label", None) or repr(value)
            witnesses.append(Witness(inputs=inputs, left=lp, right=rp))
    return witnesses


def _mc_dist_preservation(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    stats = {"samples": cfg.samples, "positions": scenario.n}
    rng = random.Random(cfg.seed)
    support = scenario.prior.support()
    tolerance = _tv_tolerance(len(support), cfg.samples, cfg.confidence)
    breached = False
    for j in range(1, scenario.n + 1):
        weights = weight_table(scenario, j)
        cache: dict = {}
        counts = {t: 0 for t in support}
        for _ in range(cfg.samples):
            t = scenario.prior.sample(rng)
            coins = _sample_coins(scenario, rng)
            counts[rsmdet(scenario, j, coins, t, weights, cache).surrogate] += 1
        tv = Fraction(0)
        for t in support:
            tv += abs(Fraction(counts[t], cfg.samples) - scenario.prior.prob(t))
        tv = tv / 2
        key = f"agent={j}"
        stats[f"tv {key}"] = str(tv)
        breached = breached or tv > tolerance
    stats["tolerance"] = str(tolerance)
    stats["within_tolerance"] = not breached
    return CheckReport("dist-preserve", "estimated", [], stats)


def check_stage_chain(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    """Equality of the four progressively simplified surrogate samplers.

    Stage 1 draws a type and runs the full surrogate procedure; stage 2
    is the same program with the procedure inlined (report placed at a
    uniform slot before matching); stage 3 fixes the report at the first
    slot and samples the returned slot only after matching; stage 4 just
    returns a uniform surrogate.  All four must equal the prior exactly.
    """
    if cfg.mode == "exact":
        _require_budget(scenario, cfg)
        positions = list(range(1, scenario.n + 1))
        results = _pmap(_stage_chain_unit, [(scenario, j) for j in positions], cfg.jobs)
        witnesses = [w for unit in results for w in unit]
        coin_outcomes = len(scenario.prior.entries) ** (2 * scenario.m - 1) * scenario.m
        stats = {
            "positions": scenario.n,
            "coin_outcomes": coin_outcomes,
            "comparisons": 4 * scenario.n,
        }
        return _verdict_report("stage-chain", witnesses, stats)
    return _mc_stage_chain(scenario, cfg)


def stage_distributions(scenario: Scenario, j: int) -> Tuple[ExactDist, ...]:
    """The four stage program output distributions for agent position ``j``."""
    weights = weight_table(scenario, j)
    cache: dict = {}

    stage1 = scenario.prior.bind(lambda t: others(scenario, j, t, weights, cache))

    coins_dist = rsmcoins(scenario)

    def matched(replicas, surrogates, slot):
        matrix = tuple(tuple(weights[(r, s)] for s in surrogates) for r in replicas)
        result = cache.get(matrix)
        if result is None:
            result = vcg_matching(matrix)
            cache[matrix] = result
        return surrogates[result.alloc[slot - 1] - 1]

    stage2 = scenario.prior.bind(
        lambda ot: coins_dist.map(
            lambda c: matched(
                insert_at(c.replicas_rest, c.slot, ot), c.surrogates, c.slot
            )
        )
    )

    m = scenario.m
    rest_dist = product([scenario.prior] * (m - 1))
    surrogates_dist = product([scenario.prior] * m)
    slots = ExactDist.uniform(range(1, m + 1))

    stage3 = scenario.prior.bind(
        lambda ot: product([rest_dist, surrogates_dist]).bind(
            lambda v: slots.map(lambda i: matched((ot,) + v[0], v[1], i))
        )
    )

    stage4 = product([surrogates_dist, slots]).map(lambda v: v[0][v[1] - 1])

    return stage1, stage2, stage3, stage4


def _stage_chain_unit(unit):
    scenario, j = unit
    stages = stage_distributions(scenario, j)
    named = list(zip(("stage1", "stage2", "stage3", "stage4"), stages))
    witnesses = []
    for (name_a, dist_a), (name_b, dist_b) in zip(named, named[1:]):
        witnesses.extend(
            _dist_mismatch_witnesses(
                {"agent": str(j), "stages": f"{name_a}={name_b}"}, dist_a, dist_b
            )
        )
    witnesses.extend(
        _dist_mismatch_witnesses(
            {"agent": str(j), "stages": "stage4=prior"}, stages[3], scenario.prior
        )
    )
    return witnesses


def _mc_stage_chain(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    rng = random.Random(cfg.seed)
    support = scenario.prior.support()
    tolerance = 2 * _tv_tolerance(len(support), cfg.samples, cfg.confidence)
    stats = {"samples": cfg.samples, "positions": scenario.n, "tolerance": str(tolerance)}
    breached = False
    for j in range(1, scenario.n + 1):
        weights = weight_table(scenario, j)
        cache: dict = {}
        histograms = []
        for sampler in (_sample_stage1, _sample_stage2, _sample_stage3, _sample_stage4):
            counts = {t: 0 for t in support}
            for _ in range(cfg.samples):
                counts[sampler(scenario, j, weights, cache, rng)] += 1
            histograms.append(counts)
        for idx in range(3):
            tv = Fraction(0)
            for t in support:
                tv += abs(
                    Fraction(histograms[idx][t], cfg.samples)
                    - Fraction(histograms[idx + 1][t], cfg.samples)
                )
            tv = tv / 2
            stats[f"tv agent={j} stage{idx + 1}-stage{idx + 2}"] = str(tv)
            breached = breached or tv > tolerance
    stats["within_tolerance"] = not breached
    return CheckReport("stage-chain", "estimated", [], stats)


def check_bic(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    """Truth-telling maximizes expected utility at every agent position.

    Exact mode computes, for every position ``j`` (via rotation to the
    front) and every true-type/report pair in the prior's support, the
    exact rational utilities and requires a non-negative margin; the
    diagonal margins are zero by construction.
    """
    support = scenario.prior.support()
    if cfg.mode == "exact":
        _require_budget(scenario, cfg)
        units = [
            (scenario, j, bid)
            for j in range(1, scenario.n + 1)
            for bid in support
        ]
        results = _pmap(_bic_unit, units, cfg.jobs)
        utilities: Dict[int, Dict[Tuple[AgentType, AgentType], Fraction]] = {}
        for (_, j, bid), by_true in zip(units, results):
            utilities.setdefault(j, {}).update(
                {(t, bid): value for t, value in by_true}
            )
        witnesses = []
        margins = {}
        for j in range(1, scenario.n + 1):
            for t in support:
                for bid in support:
                    margin = utilities[j][(t, t)] - utilities[j][(t, bid)]
                    margins[f"agent={j} true={t.label} bid={bid.label}"] = str(margin)
                    if margin < 0:
                        witnesses.append(
                            Witness(
                                inputs={
                                    "agent": str(j),
                                    "true_type": t.label,
                                    "bid": bid.label,
                                },
                                left=utilities[j][(t, t)],
                                right=utilities[j][(t, bid)],
                            )
                        )
        coin_outcomes = len(scenario.prior.entries) ** (2 * scenario.m - 1) * scenario.m
        stats = {
            "positions": scenario.n,
            "pairs": scenario.n * len(support) ** 2,
            "instances": scenario.n * len(support) ** 2,
            "coin_outcomes": coin_outcomes,
            "margins": margins,
        }
        return _verdict_report("bic", witnesses, stats)
    return _mc_bic(scenario, cfg)


def _bic_unit(unit):
    scenario, j, bid = unit
    rotated = rotate_to_front(scenario, j)
    transforms = surrogate_transforms(rotated)
    return [
        (t, util(rotated, transforms, t, bid)) for t in scenario.prior.support()
    ]


def _mc_bic(scenario: Scenario, cfg: CheckConfig) -> CheckReport:
    support = scenario.prior.support()
    stats = {"samples": cfg.samples, "positions": scenario.n}
    margins = {}
    suspected = []
    seed_offset = 0
    for j in range(1, scenario.n + 1):
        rotated = rotate_to_front(scenario, j)
        estimates = {}
        for t in support:
            for bid in support:
                sub_cfg = CheckConfig(
                    mode="montecarlo",
                    samples=cfg.samples,
                    seed=cfg.seed + seed_offset,
                    confidence=cfg.confidence,
                    budget=cfg.budget,
                )
                seed_offset += 1
                estimates[(t, bid)] = estimate_utility(rotated, t, bid, sub_cfg)
        for t in support:
            for bid in support:
                est_truth, rad_truth = estimates[(t, t)]
                est_dev, rad_dev = estimates[(t, bid)]
                margin = est_truth - est_dev
                radius = rad_truth + rad_dev
                key = f"agent={j} true={t.label} bid={bid.label}"
                margins[key] = {"estimate": str(margin), "radius": str(radius)}
                if margin + radius < 0:
                    suspected.append(key)
    stats["margins"] = margins
    stats["suspected_violations"] = suspected
    return CheckReport("bic", "estimated", [], stats)


def estimate_utility(
    scenario: Scenario, truety: AgentType, bid: AgentType, cfg: CheckConfig
) -> Tuple[Fraction, Fraction]:
    """Sample-mean estimate of the truthful-play utility with a Hoeffding radius.

    The estimate is an exact rational (a mean of rational samples); the
    radius is a conservative rational upper bound on the Hoeffding bound
    at the configured confidence, using the utility range implied by the
    valuation table.  Deterministic for a fixed seed.
    """
    if cfg.mode != "montecarlo":
        raise ValueError("estimate_utility requires montecarlo mode")
    rng = random.Random(cfg.seed)
    n, m = scenario.n, scenario.m
    weights = {j: weight_table(scenario, j) for j in range(1, n + 1)}
    caches: Dict[int, dict] = {j: {} for j in range(1, n + 1)}
    # pure memo tables; they change no rng draw, only skip recomputation
    matched_cache: Dict[tuple, object] = {}
    outcome_cache: Dict[tuple, ExactDist] = {}

    def matched_for(j, coins, report):
        key = (j, coins, report)
        result = matched_cache.get(key)
        if result is None:
            result = rsmdet(scenario, j, coins, report, weights[j], caches[j])
            matched_cache[key] = result
        return result

    def outcome_dist_for(profile):
        dist = outcome_cache.get(profile)
        if dist is None:
            dist = run_algorithm(scenario, profile)
            outcome_cache[profile] = dist
        return dist

    total = Fraction(0)
    for _ in range(cfg.samples):
        coins = _sample_coins(scenario, rng)
        matched = matched_for(1, coins, bid)
        other_surrogates = []
        for j in range(2, n + 1):
            t_j = scenario.prior.sample(rng)
            coins_j = _sample_coins(scenario, rng)
            other_surrogates.append(matched_for(j, coins_j, t_j).surrogate)
        profile = (matched.surrogate,) + tuple(other_surrogates)
        outcome = outcome_dist_for(profile).sample(rng)
        total += scenario.valuation.value(truety, outcome) - matched.payment
    estimate = total / cfg.samples

    lo, hi = scenario.valuation.bounds()
    width = (hi - lo) * m
    if width == 0:
        return estimate, Fraction(0)
    delta = 1 - cfg.confidence
    radius = float(width) * math.sqrt(math.log(2 / delta) / (2 * cfg.samples))
    return estimate, Fraction(math.ceil(radius * 10**9), 10**9)


def _sample_coins(scenario: Scenario, rng) -> Coins:
    m = scenario.m
    rest = tuple(scenario.prior.sample(rng) for _ in range(m - 1))
    surrogates = tuple(scenario.prior.sample(rng) for _ in range(m))
    slot = rng.randrange(m) + 1
    return Coins(rest, surrogates, slot)


def _sample_stage1(scenario, j, weights, cache, rng):
    t = scenario.prior.sample(rng)
    coins = _sample_coins(scenario, rng)
    return rsmdet(scenario, j, coins, t, weights, cache).surrogate


def _sample_stage2(scenario, j, weights, cache, rng):
    ot = scenario.prior.sample(rng)
    coins = _sample_coins(scenario, rng)
    replicas = insert_at(coins.replicas_rest, coins.slot, ot)
    return _sample_matched(scenario, weights, cache, replicas, coins.surrogates, coins.slot)


def _sample_stage3(scenario, j, weights, cache, rng):
    ot = scenario.prior.sample(rng)
    m = scenario.m
    rest = tuple(scenario.prior.sample(rng) for _ in range(m - 1))
    surrogates = tuple(scenario.prior.sample(rng) for _ in range(m))
    slot = rng.randrange(m) + 1
    return _sample_matched(scenario, weights, cache, (ot,) + rest, surrogates, slot)


def _sample_stage4(scenario, j, weights, cache, rng):
    surrogates = tuple(scenario.prior.sample(rng) for _ in range(scenario.m))
    return surrogates[rng.randrange(scenario.m)]


def _sample_matched(scenario, weights, cache, replicas, surrogates, slot):
    matrix = tuple(tuple(weights[(r, s)] for s in surrogates) for r in replicas)
    result = cache.get(matrix)
    if result is None:
        result = vcg_matching(matrix)
        cache[matrix] = result
    return surrogates[result.alloc[slot - 1] - 1]


# ---------------------------------------------------------------------------
# negative control: first-price payments inside the matching market


def util_first_price(
    scenario: Scenario, othermoves, truety: AgentType, bid: AgentType
) -> Fraction:
    """Agent 1's expected utility when charged their reported row's value
    for the matched surrogate instead of the Clarke payment."""
    n = scenario.n
    weights = weight_table(scenario, 1)
    cache: dict = {}
    joint = product(
        [scenario.prior.bind(lambda t, j=j: othermoves(j, t)) for j in range(2, n + 1)]
    )

    def value_if_matched(surrogate):
        return joint.expect(
            lambda rest: run_algorithm(scenario, (surrogate,) + rest).expect(
                lambda o: scenario.valuation.value(truety, o)
            )
        )

    value_by_surrogate = {s: value_if_matched(s) for s in scenario.types}

    def net(coins):
        matched = rsmdet(scenario, 1, coins, bid, weights, cache)
        return value_by_surrogate[matched.surrogate] - weights[(bid, matched.surrogate)]

    return rsmcoins(scenario).expect(net)


def first_price_bic_control(
    scenarios: Sequence[Scenario], cfg: CheckConfig
) -> CheckReport:
    """Search a widening scenario grid for a truth-telling violation of the
    first-price-payment variant.

    This is a checker self-test: the variant is expected to be
    manipulable, so the report should come back ``fail`` (with the
    violation as witness).  A ``pass`` verdict means every scenario in the
    grid was exhausted without a witness, which the test suite treats as
    the checker failing to catch a corrupted mechanism.
    """
    witnesses = []
    tried = 0
    budget_stopped = False
    for scenario in scenarios:
        tried += 1
        try:
            _require_budget(scenario, cfg)
        except BudgetExceededError:
            budget_stopped = True
            break
        transforms = surrogate_transforms(scenario)
        support = scenario.prior.support()
        utilities = {
            (t, bid): util_first_price(scenario, transforms, t, bid)
            for t in support
            for bid in support
        }
        for t in support:
            for bid in support:
                margin = utilities[(t, t)] - utilities[(t, bid)]
                if margin < 0:
                    witnesses.append(
                        Witness(
                            inputs={
                                "scenario_index": str(tried - 1),
                                "true_type": t.label,
                                "bid": bid.label,
                            },
                            left=utilities[(t, t)],
                            right=utilities[(t, bid)],
                        )
                    )
        if witnesses:
            break
    stats = {
        "scenarios_tried": tried,
        "exhausted": not witnesses,
        "budget_stopped": budget_stopped,
    }
    return _verdict_report("bic-first-price-control", witnesses, stats)


# ---------------------------------------------------------------------------
# shared helpers


def _verdict_report(name: str, witnesses, stats) -> CheckReport:
    verdict = "fail" if witnesses else "pass"
    return CheckReport(name, verdict, list(witnesses), stats)


def _tv_tolerance(support_size: int, samples: int, confidence: float) -> Fraction:
    """Union-bound Hoeffding tolerance on total-variation distance."""
    delta = 1 - confidence
    eps = math.sqrt(math.log(2 * support_size / delta) / (2 * samples))
    bound = support_size * eps / 2
    return Fraction(math.ceil(bound * 10**9), 10**9)


def _fmt_vector(values) -> str:
    return "[" + ", ".join(str(Fraction(v)) for v in values) + "]"


def _fmt_matrix(scaled_rows, scale: int) -> str:
    return (
        "["
        + ", ".join(
            _fmt_vector([Fraction(x, scale) for x in row]) for row in scaled_rows
        )
        + "]"
    )


def _fmt_matrix_fractions(rows) -> str:
    return "[" + ", ".join(_fmt_vector(row) for row in rows) + "]"


def _chunked(items: list, jobs: int) -> List[list]:
    if jobs <= 1 or len(items) <= 1:
        return [items] if items else []
    size = max(1, math.ceil(len(items) / (jobs * 4)))
    return [items[i : i + size] for i in range(0, len(items), size)]


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, optionally fanned out over worker processes.

    Every item is evaluated by a pure function of picklable arguments, so
    the merged result is identical for any worker count.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        chunksize = max(1, math.ceil(len(items) / (jobs * 4)))
        return list(pool.map(fn, items, chunksize=chunksize))
