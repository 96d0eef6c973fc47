import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affiltest.grid import CellArray, GridSpec
from affiltest.symmetry import (canonicalize, enumerate_orbits, lex_rank,
                                lex_unrank, num_orbits, orbit_size)


def test_canonicalize():
    assert canonicalize((1, 3, 2)) == (3, 2, 1)
    assert canonicalize((2, 2, 2)) == (2, 2, 2)
    assert canonicalize((1, 2, 1)) == (2, 1, 1)


def test_orbit_size():
    assert orbit_size((2, 1, 1)) == 3
    assert orbit_size((3, 2, 1)) == 6
    # 6!/(1! 2! 3!) distinct permutations
    assert orbit_size((4, 3, 3, 2, 2, 2)) == 60


def test_num_orbits():
    assert num_orbits(2, 2) == 3
    assert num_orbits(2, 3) == 4
    for j in range(1, 9):
        assert num_orbits(j, 1) == j
    with pytest.raises(ValueError):
        num_orbits(0, 2)
    with pytest.raises(ValueError):
        num_orbits(2, 0)


def test_num_orbits_matches_brute_force():
    for n in range(1, 7):
        for k in range(1, 7):
            brute = sum(1 for _ in itertools.combinations_with_replacement(range(k), n))
            assert num_orbits(k, n) == brute == math.comb(n + k - 1, k - 1)


def test_lex_rank_known_values():
    # ranks in the ascending enumeration of sorted length-3 indices
    assert lex_rank((1, 1, 1)) == 1
    assert lex_rank((2, 1, 1)) == 2
    assert lex_rank((2, 2, 1)) == 3
    assert lex_rank((3, 1, 1)) == 5
    assert lex_rank((3, 2, 2)) == 7
    assert lex_rank((4, 1, 1)) == 11


def test_lex_rank_validation():
    with pytest.raises(ValueError):
        lex_rank((1, 2))          # not nonincreasing
    with pytest.raises(ValueError):
        lex_rank((2, 0))          # entries start at 1


def test_lex_rank_unrank_exhaustive():
    # every sorted tuple with entries <= 8 and length <= 6 round-trips,
    # and ranks enumerate 1..count without gaps
    for n in range(1, 7):
        reps = sorted(tuple(sorted(c, reverse=True))
                      for c in itertools.combinations_with_replacement(range(1, 9), n))
        ranks = sorted(lex_rank(r) for r in reps)
        assert ranks == list(range(1, len(reps) + 1))
        for rep in reps:
            assert lex_unrank(lex_rank(rep), n) == rep


@settings(deadline=None, max_examples=300)
@given(st.lists(st.integers(min_value=1, max_value=30), min_size=1, max_size=7))
def test_lex_round_trip_property(entries):
    rep = tuple(sorted(entries, reverse=True))
    assert lex_unrank(lex_rank(rep), len(rep)) == rep


def test_enumerate_orbits_small_cases():
    model = enumerate_orbits(2, 3)
    assert model.m == 4
    assert model.representatives == ((1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2))
    assert tuple(model.sizes) == (1, 3, 3, 1)

    model = enumerate_orbits(3, 2)
    assert model.m == 6
    assert sorted(model.sizes) == [1, 1, 1, 2, 2, 2]

    assert enumerate_orbits(1, 4).m == 1


def test_enumerate_orbits_totals_and_expand(rng):
    for k, n in [(2, 2), (3, 2), (2, 3), (3, 3), (4, 2)]:
        model = enumerate_orbits(k, n)
        assert model.m == num_orbits(k, n)
        assert int(np.sum(model.sizes)) == k ** n
        values = rng.random([k] * n)
        totals = model.totals(values)
        # manual orbit sums
        manual = np.zeros(model.m)
        for idx in itertools.product(range(1, k + 1), repeat=n):
            manual[model.index_of(canonicalize(idx))] += values[tuple(i - 1 for i in idx)]
        assert np.allclose(totals, manual)
        # expand puts the same orbit value on every member
        orbit_vals = rng.random(model.m)
        expanded = model.expand(orbit_vals)
        for idx in itertools.product(range(1, k + 1), repeat=n):
            r = model.index_of(canonicalize(idx))
            assert expanded[tuple(i - 1 for i in idx)] == orbit_vals[r]


def test_symmetrize_examples():
    grid = GridSpec.equispaced(2, 2)
    counts = CellArray("counts", np.array([[0, 3], [5, 0]]), grid)
    model = enumerate_orbits(2, 2)
    totals = model.totals(counts.values)
    assert totals[model.index_of((2, 1))] == 8
    assert totals.sum() == 8
    zeros = model.totals(np.zeros((2, 2)))
    assert not zeros.any()
