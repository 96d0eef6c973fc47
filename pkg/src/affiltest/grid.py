"""Grid distributions on the unit cube.

A grid distribution is a probability density on ``[0, 1]**N`` that is
constant on each rectangular cell of a product partition.  The partition is
described by a single vector of breakpoints ``0 = r_0 < r_1 < ... < r_k = 1``
shared across coordinates, so there are ``k**N`` cells.  Cells are addressed
by 1-based index tuples: cell ``(j_1, ..., j_N)`` covers the product of the
half-open intervals ``(r_{j-1}, r_j]``, with the point 0 assigned to bin 1.

Three array layers share the same cell indexing and differ only in units:

``counts``
    nonnegative integers, one per cell, summing to the number of auctions;
``mass``
    cell probabilities summing to one;
``height``
    density values, i.e. mass divided by cell volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSampleError, EmptySampleError, InvalidDensityError

__all__ = [
    "GridSpec",
    "CellArray",
    "normalize",
    "bin_value",
    "bin_many",
    "count_cells",
    "cell_volume",
    "discretize_density",
    "mass_from_height",
    "height_from_mass",
]


@dataclass(frozen=True)
class GridSpec:
    """Breakpoints and the number of bidders.

    Parameters
    ----------
    breakpoints : tuple of float
        Strictly increasing, starting at 0.0 and ending at 1.0.  With
        ``k + 1`` breakpoints each coordinate has ``k`` bins.
    n_bidders : int
        Number of bids per auction, at least 1.
    """

    breakpoints: tuple[float, ...]
    n_bidders: int

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2:
            raise ValueError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("breakpoints must start at 0.0 and end at 1.0")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if self.n_bidders < 1:
            raise ValueError("n_bidders must be at least 1")

    @classmethod
    def equispaced(cls, k: int, n_bidders: int) -> "GridSpec":
        """Grid with ``k`` equal-width bins per coordinate."""
        if k < 1:
            raise ValueError("k must be at least 1")
        bp = tuple(j / k for j in range(k + 1))
        return cls(bp, n_bidders)

    @property
    def k(self) -> int:
        """Number of bins per coordinate."""
        return len(self.breakpoints) - 1

    @property
    def n_cells(self) -> int:
        return self.k ** self.n_bidders

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.k,) * self.n_bidders

    def widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.breakpoints))

    def cell_volumes(self) -> np.ndarray:
        """Array of cell volumes with the standard cell shape."""
        w = self.widths()
        vol = w
        for _ in range(self.n_bidders - 1):
            vol = np.multiply.outer(vol, w)
        return vol


def cell_volume(grid: GridSpec, index: tuple[int, ...]) -> float:
    """Volume of one cell, addressed by a 1-based index tuple."""
    _check_index(grid, index)
    w = grid.widths()
    return float(np.prod([w[j - 1] for j in index]))


def _check_index(grid: GridSpec, index) -> None:
    if len(index) != grid.n_bidders:
        raise ValueError(f"index has {len(index)} coordinates, expected {grid.n_bidders}")
    for j in index:
        if not (1 <= j <= grid.k):
            raise ValueError(f"cell coordinate {j} outside 1..{grid.k}")


@dataclass
class CellArray:
    """One value per grid cell, tagged with its units.

    ``values[j1-1, ..., jN-1]`` belongs to cell ``(j1, ..., jN)``.  The
    constructor validates the invariant attached to the tag: counts must be
    nonnegative integers, masses must sum to one, and heights must satisfy
    the adding-up identity ``sum(height * volume) == 1``.
    """

    kind: str
    values: np.ndarray
    grid: GridSpec

    _TOL = 1e-12

    def __post_init__(self):
        if self.kind not in ("counts", "mass", "height"):
            raise ValueError(f"unknown kind {self.kind!r}")
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid shape {self.grid.shape}")
        if self.kind == "counts":
            if not np.issubdtype(vals.dtype, np.integer):
                rounded = np.rint(vals)
                if not np.array_equal(rounded, vals):
                    raise ValueError("counts must be integers")
                vals = rounded.astype(np.int64)
            if (vals < 0).any():
                raise ValueError("counts must be nonnegative")
            vals = vals.astype(np.int64, copy=False)
        else:
            vals = vals.astype(np.float64, copy=False)
            if (vals < 0).any():
                raise ValueError(f"{self.kind} values must be nonnegative")
            if self.kind == "mass":
                total = float(vals.sum())
            else:
                total = float((vals * self.grid.cell_volumes()).sum())
            if abs(total - 1.0) > self._TOL:
                raise ValueError(f"{self.kind} values must total 1, got {total!r}")
        self.values = vals

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def value_at(self, index: tuple[int, ...]) -> float:
        _check_index(self.grid, index)
        return self.values[tuple(j - 1 for j in index)]


def normalize(values) -> np.ndarray:
    """Map values affinely onto [0, 1] via ``(x - min) / (max - min)``.

    Raises
    ------
    DegenerateSampleError
        If there are fewer than two distinct values, so the map is undefined.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySampleError("cannot normalize an empty sample")
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise DegenerateSampleError("all values identical; normalization undefined")
    return (x - lo) / (hi - lo)


def bin_value(grid: GridSpec, u: float) -> int:
    """1-based bin of a value in [0, 1] under the half-open-left convention.

    Bin ``j`` is the interval ``(r_{j-1}, r_j]``; the value 0 goes to bin 1.
    """
    if not (0.0 <= u <= 1.0):
        raise ValueError(f"value {u} outside [0, 1]")
    j = int(np.searchsorted(grid.breakpoints, u, side="left"))
    return max(j, 1)


def bin_many(grid: GridSpec, u) -> np.ndarray:
    """Vectorized :func:`bin_value` for an array of values in [0, 1]."""
    x = np.asarray(u, dtype=np.float64)
    if x.size and ((x < 0.0).any() or (x > 1.0).any()):
        raise ValueError("values outside [0, 1]")
    bins = np.searchsorted(grid.breakpoints, x, side="left")
    return np.maximum(bins, 1).astype(np.int64)


def count_cells(grid: GridSpec, tuples) -> CellArray:
    """Bin normalized N-tuples and tally occupancy per cell.

    Parameters
    ----------
    grid : GridSpec
    tuples : array-like, shape (T, N)
        One row per auction, values already in [0, 1].

    Returns
    -------
    CellArray with kind ``counts`` summing to T.
    """
    pts = np.asarray(tuples, dtype=np.float64)
    if pts.size == 0:
        raise EmptySampleError("no observations to count")
    if pts.ndim != 2 or pts.shape[1] != grid.n_bidders:
        raise ValueError(f"expected shape (T, {grid.n_bidders}), got {pts.shape}")
    bins = bin_many(grid, pts) - 1
    flat = np.ravel_multi_index(tuple(bins.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.n_cells).reshape(grid.shape)
    return CellArray("counts", counts.astype(np.int64), grid)


def mass_from_height(arr: CellArray) -> CellArray:
    """Convert a height array to cell masses (height times volume)."""
    if arr.kind != "height":
        raise ValueError(f"expected a height array, got {arr.kind!r}")
    mass = arr.values * arr.grid.cell_volumes()
    # conversion must not let rounding leak into the sum-to-one invariant
    return CellArray("mass", mass / mass.sum(), arr.grid)


def height_from_mass(arr: CellArray) -> CellArray:
    """Convert a mass array to density heights (mass over volume)."""
    if arr.kind != "mass":
        raise ValueError(f"expected a mass array, got {arr.kind!r}")
    return CellArray("height", arr.values / arr.grid.cell_volumes(), arr.grid)


def discretize_density(grid: GridSpec, density, resolution: int = 32,
                       mass_tol: float = 0.01) -> CellArray:
    """Project a density on [0, 1]**N onto the grid by cell averaging.

    Each cell is subdivided ``resolution`` times per axis and the density is
    averaged over subcell midpoints, a midpoint-rule estimate of the cell
    average.  The result is renormalized so the adding-up identity holds
    exactly.

    Parameters
    ----------
    grid : GridSpec
    density : callable
        Vectorized map from an array of points with shape (P, N) to P
        nonnegative values.  Must integrate to 1 over the cube up to
        ``mass_tol``.
    resolution : int
        Subdivisions per axis within each cell.

    Returns
    -------
    CellArray with kind ``height``.
    """
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    k, n = grid.k, grid.n_bidders
    bp = np.asarray(grid.breakpoints)
    # midpoints of `resolution` equal slices of every bin, axis layout (k, resolution)
    offsets = (np.arange(resolution) + 0.5) / resolution
    pts_1d = (bp[:-1, None] + np.diff(bp)[:, None] * offsets[None, :]).ravel()
    mesh = np.meshgrid(*([pts_1d] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.asarray(density(pts), dtype=np.float64)
    if vals.shape != (pts.shape[0],):
        raise InvalidDensityError(f"density returned shape {vals.shape}, expected ({pts.shape[0]},)")
    if (vals < 0).any():
        raise InvalidDensityError("density takes negative values")
    # average the per-cell subgrid: reshape to (k, m, k, m, ...) and mean over the m-axes
    vals = vals.reshape((k, resolution) * n)
    heights = vals.mean(axis=tuple(range(1, 2 * n, 2)))
    total = float((heights * grid.cell_volumes()).sum())
    if abs(total - 1.0) > mass_tol:
        raise InvalidDensityError(f"density integrates to {total:.6f}, not 1 (tolerance {mass_tol})")
    return CellArray("height", heights / total, grid)
