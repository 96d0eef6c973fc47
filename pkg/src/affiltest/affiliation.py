"""Total positivity constraints on grid distributions.

A grid distribution is affiliated exactly when its cell array is totally
positive of order 2: for every pair of cells i, i' the mass at the
componentwise max and min dominates, ``p(max) * p(min) >= p(i) * p(i')``.
In log space each such requirement is a linear row with coefficients
+1 on the max and min cells and -1 on i and i'.  Rows sum to zero, so the
constraints are insensitive to overall scaling and apply verbatim to
masses, heights, or unnormalized weights.

Two generation modes are provided.  ``adjacent`` keeps one row per axis
pair and base cell (the minimal 2x2 minors), which implies the rest for
strictly positive arrays.  ``full`` enumerates every incomparable pair.
Under bidder symmetry rows are mapped to orbit coordinates and duplicates
are dropped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import CellArray
from .symmetry import OrbitModel, canonicalize, enumerate_orbits

__all__ = [
    "Tp2Constraint",
    "ConstraintSet",
    "join_meet",
    "generate_constraints",
    "check_tp2",
    "tp2_residuals",
]


def join_meet(i, i_prime):
    """Componentwise (max, min) of two index tuples."""
    if len(i) != len(i_prime):
        raise ValueError("index tuples must have equal length")
    join = tuple(max(a, b) for a, b in zip(i, i_prime))
    meet = tuple(min(a, b) for a, b in zip(i, i_prime))
    return join, meet


@dataclass(frozen=True)
class Tp2Constraint:
    """One log-space inequality ``sum(coef * log p) >= 0``.

    ``cell_row`` maps cell index tuples to coefficients.  When generated
    under symmetry, ``orbit_row`` carries the same row collapsed onto orbit
    representatives; rows whose orbit form cancels entirely are dropped at
    generation time.
    """

    i: tuple[int, ...]
    i_prime: tuple[int, ...]
    join: tuple[int, ...]
    meet: tuple[int, ...]
    cell_row: tuple[tuple[tuple[int, ...], int], ...]
    orbit_row: tuple[tuple[tuple[int, ...], int], ...] | None = None

    def describe(self) -> str:
        parts = []
        row = self.orbit_row if self.orbit_row is not None else self.cell_row
        for cell, coef in row:
            sign = "+" if coef > 0 else "-"
            mag = abs(coef)
            term = f"{mag}*" if mag != 1 else ""
            parts.append(f"{sign}{term}log p{cell}")
        return f"pair {self.i} vs {self.i_prime}: " + " ".join(parts) + " >= 0"


@dataclass(frozen=True)
class ConstraintSet:
    """An ordered collection of TP2 rows for one grid shape."""

    k: int
    n_bidders: int
    mode: str
    symmetric: bool
    constraints: tuple[Tp2Constraint, ...]

    @property
    def j(self) -> int:
        return len(self.constraints)

    def orbit_matrix(self, orbits: OrbitModel | None = None) -> np.ndarray:
        """Dense (J, M) coefficient matrix over orbit coordinates."""
        if not self.symmetric:
            raise ValueError("orbit matrix is only defined for symmetric constraint sets")
        if orbits is None:
            orbits = enumerate_orbits(self.k, self.n_bidders)
        a = np.zeros((self.j, orbits.m))
        for r, con in enumerate(self.constraints):
            for rep, coef in con.orbit_row:
                a[r, orbits.index_of(rep)] = coef
        return a


def _incomparable(i, i_prime) -> bool:
    up = any(a > b for a, b in zip(i, i_prime))
    down = any(a < b for a, b in zip(i, i_prime))
    return up and down


def _build(i, i_prime, symmetric):
    join, meet = join_meet(i, i_prime)
    cells = {}
    for cell, coef in ((join, 1), (meet, 1), (i, -1), (i_prime, -1)):
        cells[cell] = cells.get(cell, 0) + coef
    cell_row = tuple(sorted((c, v) for c, v in cells.items() if v != 0))
    orbit_row = None
    if symmetric:
        reps = {}
        for cell, coef in ((join, 1), (meet, 1), (i, -1), (i_prime, -1)):
            rep = canonicalize(cell)
            reps[rep] = reps.get(rep, 0) + coef
        orbit_row = tuple(sorted((c, v) for c, v in reps.items() if v != 0))
    return Tp2Constraint(i, i_prime, join, meet, cell_row, orbit_row)


@lru_cache(maxsize=64)
def generate_constraints(k: int, n_bidders: int, mode: str = "adjacent",
                         symmetric: bool = True) -> ConstraintSet:
    """Enumerate TP2 rows for a k-bin grid with n_bidders coordinates.

    Parameters
    ----------
    mode : {"adjacent", "full"}
        ``adjacent`` generates the unit 2x2 minors, one per unordered axis
        pair and base cell; ``full`` generates every incomparable pair of
        cells.  ``full`` grows quadratically in the number of cells.
    symmetric : bool
        Collapse rows onto orbit coordinates, dropping rows that cancel
        under exchangeability and deduplicating identical collapsed rows.

    Notes
    -----
    With symmetry the number of rows is not a closed-form count: distinct
    cell pairs can collapse to the same orbit row, and a pair of cells in
    the same orbit can still produce a binding row, so deduplication is by
    the collapsed coefficients themselves.
    """
    if mode not in ("adjacent", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    if k < 1 or n_bidders < 1:
        raise ValueError("k and n_bidders must be at least 1")
    pairs = []
    if mode == "adjacent":
        for a, b in itertools.combinations(range(n_bidders), 2):
            for base in itertools.product(range(1, k + 1), repeat=n_bidders):
                if base[a] >= k or base[b] >= k:
                    continue
                i = list(base)
                ip = list(base)
                i[a] += 1
                ip[b] += 1
                pairs.append((tuple(i), tuple(ip)))
    else:
        cells = list(itertools.product(range(1, k + 1), repeat=n_bidders))
        for i, ip in itertools.combinations(cells, 2):
            if _incomparable(i, ip):
                pairs.append((i, ip))

    out = []
    seen = set()
    for i, ip in pairs:
        con = _build(i, ip, symmetric)
        if symmetric:
            if not con.orbit_row:
                continue
            if con.orbit_row in seen:
                continue
            seen.add(con.orbit_row)
        out.append(con)
    return ConstraintSet(k, n_bidders, mode, symmetric, tuple(out))


def tp2_residuals(arr: CellArray, cset: ConstraintSet) -> np.ndarray:
    """Residual of each row at a mass or height array.

    Where all four cells carry positive value the residual is the log form
    ``log p(max) + log p(min) - log p(i) - log p(i')``; where any cell is
    zero it is the product form ``p(max)*p(min) - p(i)*p(i')``.  Both are
    nonnegative exactly when the row is satisfied.
    """
    if arr.kind not in ("mass", "height"):
        raise ValueError("TP2 checks apply to mass or height arrays")
    if arr.grid.k != cset.k or arr.grid.n_bidders != cset.n_bidders:
        raise ValueError("constraint set does not match the array's grid shape")
    vals = arr.values
    res = np.empty(cset.j)
    for r, con in enumerate(cset.constraints):
        pj = vals[tuple(x - 1 for x in con.join)]
        pm = vals[tuple(x - 1 for x in con.meet)]
        pi = vals[tuple(x - 1 for x in con.i)]
        pip = vals[tuple(x - 1 for x in con.i_prime)]
        if min(pj, pm, pi, pip) > 0.0:
            res[r] = np.log(pj) + np.log(pm) - np.log(pi) - np.log(pip)
        else:
            res[r] = pj * pm - pi * pip
    return res


def check_tp2(arr: CellArray, cset: ConstraintSet, tol: float = 1e-10):
    """List the violated rows of a mass or height array.

    Returns
    -------
    list of (Tp2Constraint, float)
        Rows whose residual falls below ``-tol``, worst first.
    """
    res = tp2_residuals(arr, cset)
    bad = [(cset.constraints[r], float(res[r])) for r in np.flatnonzero(res < -tol)]
    bad.sort(key=lambda pair: pair[1])
    return bad
