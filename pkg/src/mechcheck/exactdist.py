"""Exact finite probability distributions with rational masses.

Every randomized quantity in this library (priors, mechanism coins,
algorithm outcomes) lives in an :class:`ExactDist`.  Masses are
``fractions.Fraction`` values, supports are finite, and distributions are
kept in a canonical form so that equality of distributions is an exact
structural comparison with no tolerance.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from fractions import Fraction
from itertools import product as _iterproduct
from typing import Callable, Iterable, Sequence


class EmptySupportError(ValueError):
    """A distribution would have no support."""


class ExactDist:
    """Finite probability distribution with exact rational masses.

    The canonical form is established at construction: zero-mass entries
    are dropped, duplicate values are merged, entries are sorted by value,
    and the total mass must be exactly 1.  Values must therefore be
    hashable and totally ordered within one distribution.
    """

    def __init__(self, entries: Iterable[tuple]) -> None:
        merged: dict = {}
        for value, prob in entries:
            p = Fraction(prob)
            if p < 0:
                raise ValueError(f"negative probability {p} for value {value!r}")
            if p == 0:
                continue
            merged[value] = merged.get(value, Fraction(0)) + p
        if not merged:
            raise EmptySupportError("distribution has empty support")
        total = sum(merged.values())
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, expected exactly 1")
        self._entries = tuple(sorted(merged.items()))

    @classmethod
    def point(cls, value) -> "ExactDist":
        """The distribution putting all mass on a single value."""
        return cls([(value, Fraction(1))])

    @classmethod
    def uniform(cls, values: Iterable) -> "ExactDist":
        """Uniform distribution over a nonempty sequence.

        Repeated elements accumulate mass: ``uniform([a, a, b])`` gives
        ``a`` mass 2/3.
        """
        values = tuple(values)
        if not values:
            raise EmptySupportError("uniform distribution over empty sequence")
        share = Fraction(1, len(values))
        return cls((v, share) for v in values)

    @property
    def entries(self) -> tuple:
        """Canonical ``(value, mass)`` pairs, sorted by value."""
        return self._entries

    def support(self) -> tuple:
        return tuple(v for v, _ in self._entries)

    def prob(self, value) -> Fraction:
        """Mass of ``value`` (zero if outside the support)."""
        for v, p in self._entries:
            if v == value:
                return p
        return Fraction(0)

    def bind(self, k: Callable[[object], "ExactDist"]) -> "ExactDist":
        """Monadic sequencing: draw from self, then from ``k(draw)``.

        The result is the exact law of total probability.
        """
        out = []
        for value, prob in self._entries:
            for inner_value, inner_prob in k(value)._entries:
                out.append((inner_value, prob * inner_prob))
        return ExactDist(out)

    def map(self, f: Callable) -> "ExactDist":
        """Push the distribution through ``f``, merging collided values."""
        return ExactDist((f(v), p) for v, p in self._entries)

    def expect(self, f: Callable[[object], Fraction]) -> Fraction:
        """Exact expectation of the rational-valued function ``f``."""
        total = Fraction(0)
        for value, prob in self._entries:
            total += prob * f(value)
        return total

    def sample(self, rng):
        """Draw one value using ``rng`` (a ``random.Random``).

        Sampling is exact: a uniform integer below the common denominator
        of all masses is drawn, so each value is hit with exactly its
        rational mass.  Deterministic for a fixed rng state.
        """
        denom, values, cumulative = self._sampler()
        draw = rng.randrange(denom)
        return values[bisect_right(cumulative, draw)]

    def _sampler(self):
        table = getattr(self, "_sampler_table", None)
        if table is None:
            denom = math.lcm(*(p.denominator for _, p in self._entries))
            values = []
            cumulative = []
            running = 0
            # entry i owns integer draws in [cumulative[i-1], cumulative[i])
            for v, p in self._entries:
                running += int(p * denom)
                values.append(v)
                cumulative.append(running)
            table = (denom, tuple(values), tuple(cumulative))
            self._sampler_table = table
        return table

    def __getstate__(self):
        return self._entries

    def __setstate__(self, state):
        self._entries = state

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExactDist):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __repr__(self) -> str:
        body = ", ".join(f"{v!r}: {p}" for v, p in self._entries)
        return f"ExactDist({{{body}}})"


def product(dists: Sequence[ExactDist]) -> ExactDist:
    """Joint distribution of independent draws, one per input, in order.

    ``product([])`` is the point mass on the empty tuple.
    """
    out = []
    for combo in _iterproduct(*(d.entries for d in dists)):
        mass = Fraction(1)
        for _, p in combo:
            mass *= p
        out.append((tuple(v for v, _ in combo), mass))
    return ExactDist(out)


def dist_equal(d1: ExactDist, d2: ExactDist) -> bool:
    """Exact distribution equality: same support, identical masses."""
    return d1.entries == d2.entries
