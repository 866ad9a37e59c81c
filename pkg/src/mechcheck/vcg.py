"""The Vickrey-Clarke-Groves mechanism.

Two forms are provided.  :func:`vcg_general` works over an arbitrary
finite outcome range with per-agent value functions and charges each
agent the externality they impose on the others (the Clarke pivot).
:func:`vcg_matching` is the specialization to a square buyer/good market:
the outcome is a maximum-weight perfect matching and the pivot removes
one buyer while keeping all goods available.

Tie-breaking is fixed and report-independent: lowest position in the
outcome range, lexicographically smallest permutation for matchings.  For
matchings the brute-force permutation solver defines this canonical answer
and is used up to 8 buyers; above that an exact rational Hungarian solver
takes over, with its answer repaired to the same lexicographic canon.

All arithmetic is exact.  Internally a weight matrix is scaled by the
common denominator of its entries to plain integers, which changes no
comparison and keeps the permutation scan cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Callable, Sequence, Tuple


class EmptyRangeError(ValueError):
    """The outcome range is empty."""


class NonSquareError(ValueError):
    """The weight matrix is not square (or is empty)."""


@dataclass(frozen=True)
class VcgOutcome:
    """Chosen outcome plus one Clarke payment per participating agent."""

    outcome: object
    prices: Tuple[Fraction, ...]


@dataclass(frozen=True)
class MatchingResult:
    """Assignment of buyers to goods plus per-buyer payments.

    ``alloc[j]`` is the 1-based good index matched to buyer ``j+1``; the
    vector is always a permutation of ``1..m``.
    """

    alloc: Tuple[int, ...]
    pays: Tuple[Fraction, ...]


def vcg_general(values: Sequence[Callable], outcome_range: Sequence) -> VcgOutcome:
    """Run VCG over an explicit outcome range.

    ``values[j](o)`` is agent ``j+1``'s rational value for outcome ``o``.
    The chosen outcome maximizes total value (ties to the earliest
    position in ``outcome_range``); agent ``j`` pays the others' best
    achievable welfare minus the others' welfare at the chosen outcome.
    """
    outcome_range = list(outcome_range)
    if not outcome_range:
        raise EmptyRangeError("outcome range is empty")

    def best(value_fns):
        chosen, chosen_welfare = None, None
        for o in outcome_range:
            welfare = Fraction(0)
            for fn in value_fns:
                welfare += fn(o)
            if chosen is None or welfare > chosen_welfare:
                chosen, chosen_welfare = o, welfare
        return chosen, chosen_welfare

    outcome, _ = best(values)
    prices = []
    for j in range(len(values)):
        rest = [fn for i, fn in enumerate(values) if i != j]
        _, best_without = best(rest) if rest else (None, Fraction(0))
        at_chosen = Fraction(0)
        for fn in rest:
            at_chosen += fn(outcome)
        prices.append(best_without - at_chosen)
    return VcgOutcome(outcome, tuple(prices))


def is_permutation(alloc: Sequence[int]) -> bool:
    """True iff ``alloc`` is a bijection on ``{1..len(alloc)}``."""
    return sorted(alloc) == list(range(1, len(alloc) + 1))


def vcg_matching(weights: Sequence[Sequence]) -> MatchingResult:
    """VCG on a square buyer/good market with the given weight matrix.

    ``weights[j][g]`` is buyer ``j+1``'s value for good ``g+1``.  The
    buyer removed by the pivot leaves all ``m`` goods available to the
    remaining ``m-1`` buyers, which makes every payment non-negative.
    """
    scaled, scale = _scaled_int_matrix(weights)
    if len(scaled) <= _BRUTE_FORCE_LIMIT:
        perm, total, without = _brute_solve(scaled)
    else:
        perm, total, without = _fast_solve(scaled)
    return _assemble(scaled, scale, perm, total, without)


def solve_matching_brute(weights: Sequence[Sequence]) -> MatchingResult:
    """Brute-force permutation solver; authoritative for tie-breaking.

    Factorial cost: intended for small markets and as the oracle the fast
    solver is checked against.
    """
    scaled, scale = _scaled_int_matrix(weights)
    return _assemble(scaled, scale, *_brute_solve(scaled))


def solve_matching_fast(weights: Sequence[Sequence]) -> MatchingResult:
    """Hungarian-based solver with lexicographic tie repair."""
    scaled, scale = _scaled_int_matrix(weights)
    return _assemble(scaled, scale, *_fast_solve(scaled))


def matching_weight(weights: Sequence[Sequence], result: MatchingResult) -> Fraction:
    """Total weight of the matching in ``result`` under ``weights``."""
    total = Fraction(0)
    for j, g in enumerate(result.alloc):
        total += Fraction(weights[j][g - 1])
    return total


_BRUTE_FORCE_LIMIT = 8

_PERM_CACHE: dict = {}


def _perms(m: int):
    cached = _PERM_CACHE.get(m)
    if cached is None:
        cached = tuple(permutations(range(m)))
        _PERM_CACHE[m] = cached
    return cached


def _scaled_int_matrix(weights) -> Tuple[list, int]:
    rows = [tuple(Fraction(x) for x in row) for row in weights]
    m = len(rows)
    if m == 0 or any(len(row) != m for row in rows):
        raise NonSquareError(f"weight matrix must be square and non-empty, got rows {[len(r) for r in rows]}")
    scale = 1
    for row in rows:
        for x in row:
            scale = math.lcm(scale, x.denominator)
    return [[int(x * scale) for x in row] for row in rows], scale


def _brute_solve(scaled):
    """Scan all permutations; first maximum is the lexicographic canon.

    Also collects, per buyer j, the best total achievable by the other
    buyers with all goods available (the pivot welfare): any injection of
    the others into the goods extends to a full permutation, so it equals
    ``max over perms of (total - w[j][perm[j]])``.
    """
    m = len(scaled)
    best_perm = None
    best_total = None
    without = [None] * m
    for perm in _perms(m):
        total = 0
        for j in range(m):
            total += scaled[j][perm[j]]
        if best_total is None or total > best_total:
            best_perm, best_total = perm, total
        for j in range(m):
            rest = total - scaled[j][perm[j]]
            if without[j] is None or rest > without[j]:
                without[j] = rest
    return best_perm, best_total, without


def _assemble(scaled, scale, perm, total, without) -> MatchingResult:
    pays = tuple(
        Fraction(without[j] - (total - scaled[j][perm[j]]), scale) for j in range(len(scaled))
    )
    return MatchingResult(tuple(g + 1 for g in perm), pays)


def _fast_solve(scaled):
    m = len(scaled)
    total = _hungarian_max_rect(scaled)
    perm = _lex_optimal_perm(scaled, total)
    without = []
    for j in range(m):
        rest = [row for i, row in enumerate(scaled) if i != j]
        without.append(_hungarian_max_rect(rest))
    return perm, total, without


def _lex_optimal_perm(scaled, best_total):
    """Lexicographically smallest permutation achieving ``best_total``.

    Fix goods row by row: a good is kept iff the remaining rows can still
    complete to an optimal matching, decided by an exact sub-assignment
    solve.
    """
    m = len(scaled)
    used = [False] * m
    perm = []
    prefix = 0
    for j in range(m):
        for g in range(m):
            if used[g]:
                continue
            remaining_goods = [h for h in range(m) if not used[h] and h != g]
            sub = [[scaled[i][h] for h in remaining_goods] for i in range(j + 1, m)]
            if prefix + scaled[j][g] + _hungarian_max_rect(sub) == best_total:
                used[g] = True
                perm.append(g)
                prefix += scaled[j][g]
                break
    return tuple(perm)


def _hungarian_max_rect(rows) -> int:
    """Max-weight assignment of every row to a distinct column.

    Requires ``len(rows) <= columns``; exact integer arithmetic via the
    potential-based shortest-augmenting-path construction on negated
    weights.
    """
    n = len(rows)
    if n == 0:
        return 0
    m = len(rows[0])
    # minimization on costs = -weights, 1-based with a dummy 0 row/col
    INF = None
    u = [0] * (n + 1)
    v = [0] * (m + 1)
    way = [0] * (m + 1)
    match = [0] * (m + 1)  # match[col] = row currently assigned, 0 = free
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        visited = [False] * (m + 1)
        while True:
            visited[j0] = True
            i0 = match[j0]
            delta = INF
            j1 = -1
            for j in range(1, m + 1):
                if visited[j]:
                    continue
                cur = -rows[i0 - 1][j - 1] - u[i0] - v[j]
                if minv[j] is None or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is None or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if visited[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                elif minv[j] is not None:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    total = 0
    for j in range(1, m + 1):
        if match[j]:
            total += rows[match[j] - 1][j - 1]
    return total
