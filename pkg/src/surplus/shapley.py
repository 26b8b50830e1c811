"""Exact Shapley attribution over small coalition games.

A Game is just a player count plus a value function over frozensets of
player indices.  exact_shapley enumerates all coalitions, so it is meant
for the refit-oracle setting (p at most 20, and in practice far less).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .learner import CoalitionMask

__all__ = [
    "Game",
    "ShapleyVector",
    "exact_shapley",
    "filtered_value",
    "coverage_probability",
]

_MAX_PLAYERS = 20


@dataclass(frozen=True)
class Game:
    n_players: int
    value: Callable[[frozenset], float]

    def __post_init__(self):
        if not isinstance(self.n_players, int) or self.n_players < 1:
            raise ValueError("n_players must be a positive integer")


@dataclass(frozen=True, eq=False)
class ShapleyVector:
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 1:
            raise ValueError("phi must be one-dimensional")
        object.__setattr__(self, "phi", phi)
        phi.setflags(write=False)


def exact_shapley(game: Game) -> ShapleyVector:
    """Enumerate every coalition and average marginal contributions.

    phi_i = sum over a not containing i of |a|!(n-|a|-1)!/n! * (v(a+i) - v(a)).
    """
    n = game.n_players
    if n > _MAX_PLAYERS:
        raise ValueError(
            "exact enumeration supports at most %d players, got %d" % (_MAX_PLAYERS, n)
        )
    # coalition values indexed by bitmask, each computed exactly once
    vals = np.empty(1 << n)
    for mask in range(1 << n):
        members = frozenset(i for i in range(n) if mask >> i & 1)
        v = float(game.value(members))
        if not math.isfinite(v):
            raise ValueError("game value is not finite on %r" % (tuple(sorted(members)),))
        vals[mask] = v
    # exact rational weights by coalition size, shared across players
    fact = [math.factorial(s) for s in range(n + 1)]
    weight = [
        float(Fraction(fact[s] * fact[n - s - 1], fact[n])) for s in range(n)
    ]
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        terms = (
            weight[(mask).bit_count()] * (vals[mask | bit] - vals[mask])
            for mask in range(1 << n)
            if not mask & bit
        )
        phi[i] = math.fsum(terms)
    return ShapleyVector(phi)


def filtered_value(losses, cutoff: float) -> Game:
    """Build the indicator-filtered game from per-coalition losses.

    Coalitions with loss above the cutoff, and coalitions whose loss was
    never measured, are worth 0.  Losses are negated so that a better
    (lower-loss) coalition has a higher value and important features
    come out with positive phi.
    """
    if not losses:
        raise ValueError("empty loss map")
    by_members = {}
    p = None
    for mask, loss in losses.items():
        if not isinstance(mask, CoalitionMask):
            raise TypeError("loss keys must be CoalitionMask, got %r" % (mask,))
        if p is None:
            p = mask.p
        elif mask.p != p:
            raise ValueError("masks disagree on feature count: %d vs %d" % (p, mask.p))
        by_members[frozenset(mask.indices)] = float(loss)
    if frozenset(range(p)) not in by_members:
        raise ValueError("loss map must include the grand coalition")

    def value(members: frozenset) -> float:
        loss = by_members.get(frozenset(members))
        if loss is None or loss > cutoff:
            return 0.0
        return -loss

    return Game(n_players=p, value=value)


def coverage_probability(p: int, T: int, j: int) -> float:
    """P(a uniform size-j subset of p features contains all T true ones)."""
    for name, v in (("p", p), ("T", T), ("j", j)):
        if not isinstance(v, int):
            raise TypeError("%s must be an integer" % name)
    if not 1 <= T <= p:
        raise ValueError("need 1 <= T <= p, got T=%d p=%d" % (T, p))
    if not 1 <= j <= p:
        raise ValueError("need 1 <= j <= p, got j=%d p=%d" % (j, p))
    if j < T:
        return 0.0
    return float(Fraction(math.comb(p - T, j - T), math.comb(p, j)))
