"""Exchangeability structure of cell indices.

With symmetric (exchangeable) bidders a grid distribution is constant on
orbits of cells under coordinate permutation.  Each orbit is represented by
its index tuple sorted in nonincreasing order.  Representatives are ranked
in ascending lexicographic order over nonincreasing tuples, which for bins
bounded by k enumerates exactly the ranks 1..M with M = num_orbits(k, N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "canonicalize",
    "orbit_size",
    "num_orbits",
    "lex_rank",
    "lex_unrank",
    "OrbitModel",
    "enumerate_orbits",
]


def canonicalize(index) -> tuple[int, ...]:
    """Orbit representative: coordinates sorted in nonincreasing order."""
    return tuple(sorted(index, reverse=True))


def orbit_size(rep) -> int:
    """Number of distinct permutations of a representative tuple."""
    n = len(rep)
    size = math.factorial(n)
    for v in set(rep):
        size //= math.factorial(rep.count(v))
    return size


def num_orbits(k: int, n_bidders: int) -> int:
    """Count of orbits with n_bidders coordinates and bins 1..k.

    Equals the number of multisets of size n_bidders from k symbols,
    ``C(n_bidders + k - 1, k - 1)``.
    """
    if k < 1 or n_bidders < 1:
        raise ValueError("k and n_bidders must be at least 1")
    return math.comb(n_bidders + k - 1, k - 1)


def _tail_count(v: int, length: int) -> int:
    # nonincreasing tuples of given length with entries in 1..v
    return math.comb(length + v - 1, v - 1)


def lex_rank(rep) -> int:
    """1-based ascending lexicographic rank of a nonincreasing tuple."""
    s = tuple(rep)
    n = len(s)
    if n == 0:
        raise ValueError("empty tuple has no rank")
    if any(x < 1 for x in s) or any(a < b for a, b in zip(s, s[1:])):
        raise ValueError(f"{s} is not a nonincreasing tuple of positive bins")
    rank = 1
    for p, sp in enumerate(s):
        for v in range(1, sp):
            rank += _tail_count(v, n - p - 1)
    return rank


def lex_unrank(rank: int, n_bidders: int) -> tuple[int, ...]:
    """Inverse of :func:`lex_rank` for a given tuple length."""
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if n_bidders < 1:
        raise ValueError("n_bidders must be at least 1")
    remaining = rank - 1
    out = []
    for p in range(n_bidders):
        v = 1
        while True:
            block = _tail_count(v, n_bidders - p - 1)
            if remaining < block:
                break
            remaining -= block
            v += 1
        out.append(v)
    if remaining != 0 or any(a < b for a, b in zip(out, out[1:])):
        raise ValueError(f"rank {rank} does not unrank cleanly")  # pragma: no cover
    return tuple(out)


@dataclass(frozen=True)
class OrbitModel:
    """Orbit bookkeeping for one (k, n_bidders) pair.

    Attributes
    ----------
    representatives : tuple of tuples
        Orbit representatives in rank order, so representatives[r-1] has
        lex rank r.
    sizes : ndarray
        Orbit sizes aligned with representatives.
    positions : ndarray
        For every cell (standard cell shape), the 0-based position of its
        orbit in ``representatives``.
    """

    k: int
    n_bidders: int
    representatives: tuple[tuple[int, ...], ...]
    sizes: np.ndarray
    positions: np.ndarray

    @property
    def m(self) -> int:
        return len(self.representatives)

    def index_of(self, rep) -> int:
        return lex_rank(canonicalize(rep)) - 1

    def totals(self, cell_values: np.ndarray) -> np.ndarray:
        """Sum a cell array over each orbit."""
        return np.bincount(self.positions.ravel(),
                           weights=np.asarray(cell_values, dtype=np.float64).ravel(),
                           minlength=self.m)

    def expand(self, orbit_values: np.ndarray) -> np.ndarray:
        """Broadcast one value per orbit back to the full cell array."""
        vals = np.asarray(orbit_values)
        if vals.shape != (self.m,):
            raise ValueError(f"expected {self.m} orbit values, got shape {vals.shape}")
        return vals[self.positions]


@lru_cache(maxsize=128)
def enumerate_orbits(k: int, n_bidders: int) -> OrbitModel:
    """Build the orbit model for k bins and n_bidders coordinates."""
    m = num_orbits(k, n_bidders)
    shape = (k,) * n_bidders
    # rank every cell: sort its coordinates descending, then apply the
    # rank formula through a precomputed prefix table
    prefix = np.zeros((n_bidders, k + 1), dtype=np.int64)
    for p in range(n_bidders):
        for v in range(1, k + 1):
            prefix[p, v] = prefix[p, v - 1] + _tail_count(v, n_bidders - p - 1)
    cells = np.indices(shape).reshape(n_bidders, -1).T + 1
    sorted_desc = -np.sort(-cells, axis=1)
    ranks = 1 + sum(prefix[p, sorted_desc[:, p] - 1] for p in range(n_bidders))
    positions = (ranks - 1).reshape(shape)
    reps = [None] * m
    sizes = np.bincount(positions.ravel(), minlength=m)
    first = {}
    for flat, pos in enumerate(positions.ravel()):
        if pos not in first:
            first[pos] = flat
    for pos, flat in first.items():
        idx = np.unravel_index(flat, shape)
        reps[pos] = canonicalize(tuple(int(j) + 1 for j in idx))
    if any(r is None for r in reps):  # pragma: no cover
        raise RuntimeError("orbit enumeration failed to cover all ranks")
    return OrbitModel(k, n_bidders, tuple(reps), sizes.astype(np.int64),
                      positions.astype(np.int64))
