"""Data generating processes and Monte Carlo studies of the test.

Sampling happens in two stages that mirror the grid structure: draw a cell
from the cell masses, then place the point uniformly inside the cell's
box.  Every replication derives its own seed from the master seed through
a splitmix64 stream, and all randomness flows through counter-based
generators, so results are reproducible bit for bit and independent of
how replications are scheduled across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .grid import CellArray, GridSpec, count_cells, discretize_density, mass_from_height
from .inference import TestOptions, TestReport, kodde_palm_bounds, run_test

__all__ = [
    "Dgp",
    "McResult",
    "splitmix64",
    "sample_tuples",
    "uniform_dgp",
    "independent_skewed_dgp",
    "affiliated_2x2_dgp",
    "violating_2x2_dgp",
    "affiliated_3x3_dgp",
    "builtin_dgps",
    "mc_study",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(seed: int, index: int) -> int:
    """Deterministic 64-bit stream: the index-th output of splitmix64."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Dgp:
    """A named grid distribution to sample from."""

    label: str
    masses: CellArray

    @property
    def grid(self) -> GridSpec:
        return self.masses.grid


def sample_tuples(dgp: Dgp, n_auctions: int, seed: int) -> np.ndarray:
    """Draw signal tuples, shape (n_auctions, N), values in (0, 1].

    Points land in the half-open box matching the binning convention, so
    re-binning a sample recovers the drawn cells exactly.
    """
    if n_auctions < 1:
        raise ValueError("n_auctions must be positive")
    grid = dgp.grid
    rng = np.random.Generator(np.random.Philox(key=seed))
    flat = dgp.masses.values.ravel()
    cells = rng.choice(flat.size, size=n_auctions, p=flat)
    bins = np.column_stack(np.unravel_index(cells, grid.shape))
    bp = np.asarray(grid.breakpoints)
    widths = np.diff(bp)
    u = rng.random((n_auctions, grid.n_bidders))
    return bp[bins + 1] - widths[bins] * u


def uniform_dgp(k: int = 2, n_bidders: int = 2) -> Dgp:
    """Equal mass on every cell; affiliation holds with equality everywhere."""
    grid = GridSpec.equispaced(k, n_bidders)
    masses = CellArray("mass", np.full(grid.shape, 1.0 / grid.n_cells), grid)
    return Dgp(f"uniform-{k}x{n_bidders}", masses)


def independent_skewed_dgp(k: int = 2, n_bidders: int = 2,
                           marginal=None) -> Dgp:
    """Product measure with a decreasing marginal; on the TP2 boundary."""
    grid = GridSpec.equispaced(k, n_bidders)
    if marginal is None:
        marginal = np.arange(k, 0, -1, dtype=np.float64)
    q = np.asarray(marginal, dtype=np.float64)
    if q.shape != (k,) or (q < 0).any() or q.sum() <= 0:
        raise ValueError("marginal must be k nonnegative values")
    q = q / q.sum()
    prod = q.copy()
    for _ in range(n_bidders - 1):
        prod = np.multiply.outer(prod, q)
    return Dgp(f"independent-skewed-{k}x{n_bidders}",
               CellArray("mass", prod / prod.sum(), grid))


def affiliated_2x2_dgp(rho: float = 0.2) -> Dgp:
    """Two bins, two bidders, diagonal mass (1+rho)/4: strictly affiliated."""
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must be in [0, 1)")
    grid = GridSpec.equispaced(2, 2)
    hi, lo = (1.0 + rho) / 4.0, (1.0 - rho) / 4.0
    masses = np.array([[hi, lo], [lo, hi]])
    return Dgp(f"affiliated-2x2(rho={rho:g})", CellArray("mass", masses, grid))


def violating_2x2_dgp(margin: float = 0.1) -> Dgp:
    """Anti-diagonal mass (1+margin)/4: violates the single TP2 row.

    The product-form violation is exactly margin / 4.
    """
    if not (0.0 < margin <= 1.0):
        raise ValueError("margin must be in (0, 1]")
    grid = GridSpec.equispaced(2, 2)
    hi, lo = (1.0 + margin) / 4.0, (1.0 - margin) / 4.0
    masses = np.array([[lo, hi], [hi, lo]])
    return Dgp(f"violating-2x2(margin={margin:g})", CellArray("mass", masses, grid))


def affiliated_3x3_dgp(strength: float = 2.0, n_bidders: int = 2) -> Dgp:
    """Discretization of a smooth positively dependent density.

    The density is proportional to ``exp(strength * sum_{a<b} u_a u_b)``,
    whose log is supermodular, so every discretization is TP2.
    """
    if strength < 0:
        raise ValueError("strength must be nonnegative")
    grid = GridSpec.equispaced(3, n_bidders)

    def raw(points):
        acc = np.zeros(points.shape[0])
        for a in range(n_bidders):
            for b in range(a + 1, n_bidders):
                acc += points[:, a] * points[:, b]
        return np.exp(strength * acc)

    # normalize by a fine midpoint quadrature before projecting
    axis = (np.arange(200) + 0.5) / 200.0
    mesh = np.meshgrid(*([axis] * n_bidders), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    z = float(raw(pts).mean())
    heights = discretize_density(grid, lambda p: raw(p) / z, resolution=48)
    return Dgp(f"affiliated-3x3(strength={strength:g})", mass_from_height(heights))


def builtin_dgps() -> dict[str, Dgp]:
    """The named catalog used by the command line."""
    return {
        "uniform": uniform_dgp(),
        "independent-skewed": independent_skewed_dgp(),
        "affiliated-2x2": affiliated_2x2_dgp(),
        "violating-2x2": violating_2x2_dgp(),
        "affiliated-3x3": affiliated_3x3_dgp(),
    }


@dataclass(frozen=True)
class McResult:
    """Aggregated Monte Carlo study output."""

    dgp: str
    n_auctions: int
    replications: int
    seed: int
    sizes: tuple[float, ...]
    rows: tuple[dict, ...]
    rates: dict
    mean_lr: float

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp,
            "n_auctions": self.n_auctions,
            "replications": self.replications,
            "seed": self.seed,
            "sizes": list(self.sizes),
            "mean_lr": self.mean_lr,
            "rates": self.rates,
            "rows": list(self.rows),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(self.rows[0].keys()))
            writer.writeheader()
            writer.writerows(self.rows)


def _one_replication(dgp: Dgp, n_auctions: int, rep: int, rep_seed: int,
                     sizes, options: TestOptions) -> dict:
    tuples = sample_tuples(dgp, n_auctions, rep_seed)
    counts = count_cells(dgp.grid, tuples)
    report = run_test(counts, replace(options, seed=rep_seed))
    row = {
        "replication": rep,
        "seed": rep_seed,
        "lr_stat": report.lr_stat,
        "pvalue": report.pvalue,
        "j": report.j,
    }
    for size in sizes:
        lower, upper = kodde_palm_bounds(report.j, size)
        row[f"reject_pvalue_{size:g}"] = int(report.pvalue <= size)
        row[f"reject_kp_lower_{size:g}"] = int(report.lr_stat > lower)
        row[f"reject_kp_upper_{size:g}"] = int(report.lr_stat > upper)
    return row


def mc_study(dgp: Dgp, n_auctions: int, replications: int, seed: int = 0,
             sizes=(0.10, 0.05, 0.01), options: TestOptions | None = None,
             n_jobs: int = 1) -> McResult:
    """Replicate the full test on fresh samples and tabulate rejections.

    Each replication r gets the seed ``splitmix64(seed, r)`` for both its
    sample and its weight simulation, so the study is reproducible for
    any ``n_jobs`` and results do not depend on scheduling.  Weight draws
    default to 10000 per replication here; pass ``options`` to override.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    sizes = tuple(float(s) for s in sizes)
    opts = options or TestOptions(weight_draws=10_000)
    seeds = [splitmix64(seed, r) for r in range(replications)]
    if n_jobs == 1:
        rows = [_one_replication(dgp, n_auctions, r, s, sizes, opts)
                for r, s in enumerate(seeds)]
    else:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_one_replication)(dgp, n_auctions, r, s, sizes, opts)
            for r, s in enumerate(seeds))
    rates = {}
    for rule in ("pvalue", "kp_lower", "kp_upper"):
        rates[rule] = {f"{size:g}": float(np.mean([row[f"reject_{rule}_{size:g}"]
                                                   for row in rows]))
                       for size in sizes}
    mean_lr = float(np.mean([row["lr_stat"] for row in rows]))
    return McResult(dgp.label, n_auctions, replications, seed, sizes,
                    tuple(rows), rates, mean_lr)
