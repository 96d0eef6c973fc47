"""Controlling for observed auction heterogeneity.

Auctions differ in scale, so raw bids are not comparable across auctions.
The model is multiplicative: the log bid is a smooth function of the log
engineer estimate plus a bidder-specific disturbance,

    log B = psi(log p) + U.

Fitting psi by least squares, least absolute deviations, or a kernel
smoother and keeping the residuals strips the common scale; the pooled
residuals, renormalized onto [0, 1], are the homogenized signals whose
joint distribution the affiliation test examines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.optimize
import scipy.sparse

from .errors import DataFormatError, DegenerateSampleError, EmptySampleError, SolverError
from .grid import normalize

__all__ = [
    "AuctionRecord",
    "BidTable",
    "RegressionFit",
    "read_bid_csv",
    "scatter_points",
    "fit_ls",
    "fit_lad",
    "fit_kernel",
    "residual_tuples",
]


@dataclass(frozen=True)
class AuctionRecord:
    auction_id: str
    engineer_estimate: float
    bids: tuple[float, ...]


@dataclass(frozen=True)
class BidTable:
    """Auctions kept after filtering, plus bookkeeping about the file."""

    records: tuple[AuctionRecord, ...]
    dropped_auctions: int
    total_rows: int

    @property
    def n_auctions(self) -> int:
        return len(self.records)


_REQUIRED_COLUMNS = ("auction_id", "engineer_estimate", "bid")


def read_bid_csv(path, n_bidders: int) -> BidTable:
    """Load a long-format bid file and keep auctions with n_bidders bids.

    The file needs columns ``auction_id``, ``engineer_estimate``, ``bid``,
    one row per bid; extra columns are ignored.  The estimate must repeat
    identically within an auction.  Auctions with any other number of bids
    are dropped and counted, mirroring how entry varies in real lettings.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"bid file not found: {path}")
    if n_bidders < 1:
        raise ValueError("n_bidders must be at least 1")
    order: list[str] = []
    estimates: dict[str, float] = {}
    bids: dict[str, list[float]] = {}
    total = 0
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in _REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}; "
                                  f"found {header}")
        for line_no, row in enumerate(reader, start=2):
            total += 1
            aid = (row["auction_id"] or "").strip()
            if not aid:
                raise DataFormatError(f"{path}:{line_no}: empty auction_id")
            try:
                est = float(row["engineer_estimate"])
                bid = float(row["bid"])
            except (TypeError, ValueError):
                raise DataFormatError(
                    f"{path}:{line_no}: non-numeric engineer_estimate or bid")
            if est <= 0 or bid <= 0:
                raise DataFormatError(
                    f"{path}:{line_no}: engineer_estimate and bid must be positive")
            if aid not in estimates:
                order.append(aid)
                estimates[aid] = est
                bids[aid] = []
            elif estimates[aid] != est:
                raise DataFormatError(
                    f"{path}:{line_no}: auction {aid!r} repeats with a different "
                    f"engineer_estimate ({estimates[aid]!r} vs {est!r})")
            bids[aid].append(bid)
    if total == 0:
        raise EmptySampleError(f"{path}: no data rows")
    records = []
    dropped = 0
    for aid in order:
        if len(bids[aid]) == n_bidders:
            records.append(AuctionRecord(aid, estimates[aid], tuple(bids[aid])))
        else:
            dropped += 1
    return BidTable(tuple(records), dropped, total)


def scatter_points(table: BidTable):
    """Pooled (log estimate, log bid) pairs, one per bid row."""
    xs, ys, ids = [], [], []
    for rec in table.records:
        for bid in rec.bids:
            xs.append(np.log(rec.engineer_estimate))
            ys.append(np.log(bid))
            ids.append(rec.auction_id)
    return np.asarray(xs), np.asarray(ys), ids


@dataclass(frozen=True)
class RegressionFit:
    """A fitted homogenization curve.

    Parametric fits carry intercept and slope; the kernel fit carries its
    training data and bandwidth and is only defined on the observed range
    of x.  ``r_squared`` is populated by least squares alone.
    """

    method: str
    intercept: float | None = None
    slope: float | None = None
    r_squared: float | None = None
    x_train: np.ndarray | None = None
    y_train: np.ndarray | None = None
    bandwidth: float | None = None

    def predict(self, x) -> np.ndarray:
        xq = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self.method in ("ls", "lad"):
            return self.intercept + self.slope * xq
        lo, hi = float(self.x_train.min()), float(self.x_train.max())
        pad = 1e-9 * max(1.0, hi - lo)
        if (xq < lo - pad).any() or (xq > hi + pad).any():
            raise ValueError(f"kernel fit is defined on [{lo:.6g}, {hi:.6g}] only")
        diff = (xq[:, None] - self.x_train[None, :]) / self.bandwidth
        w = np.exp(-0.5 * diff ** 2)
        return (w @ self.y_train) / w.sum(axis=1)


def _check_xy(x, y, minimum=2):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < minimum:
        raise EmptySampleError(f"need at least {minimum} points, got {x.size}")
    if np.unique(x).size < 2:
        raise DegenerateSampleError("x carries no variation; slope is unidentified")
    return x, y


def fit_ls(x, y) -> RegressionFit:
    """Ordinary least squares line through the pooled scatter."""
    x, y = _check_xy(x, y)
    xbar, ybar = x.mean(), y.mean()
    sxx = float(((x - xbar) ** 2).sum())
    sxy = float(((x - xbar) * (y - ybar)).sum())
    slope = sxy / sxx
    intercept = float(ybar - slope * xbar)
    resid = y - intercept - slope * x
    sst = float(((y - ybar) ** 2).sum())
    r2 = 1.0 if sst == 0.0 else 1.0 - float((resid ** 2).sum()) / sst
    return RegressionFit("ls", intercept, float(slope), float(r2))


def fit_lad(x, y) -> RegressionFit:
    """Least absolute deviations line, solved exactly as a linear program.

    Splitting each absolute residual into a slack variable t gives

        minimize sum(t)   subject to   -t <= y - a - b*x <= t,

    which HiGHS solves to a vertex.  An LAD optimum interpolates data
    points, exactly where reweighting schemes cycle, so the exact program
    is both more robust and deterministic.
    """
    x, y = _check_xy(x, y)
    n = x.size
    design = scipy.sparse.csc_matrix(np.column_stack([np.ones_like(x), x]))
    eye = scipy.sparse.identity(n, format="csc")
    a_ub = scipy.sparse.vstack([scipy.sparse.hstack([design, -eye]),
                                scipy.sparse.hstack([-design, -eye])],
                               format="csc")
    b_ub = np.concatenate([y, -y])
    cost = np.concatenate([[0.0, 0.0], np.ones(n)])
    bounds = [(None, None), (None, None)] + [(0.0, None)] * n
    res = scipy.optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                                 method="highs")
    if not res.success:
        raise SolverError(f"LAD linear program did not solve: {res.message}")
    return RegressionFit("lad", float(res.x[0]), float(res.x[1]))


def fit_kernel(x, y, bandwidth: float | None = None) -> RegressionFit:
    """Gaussian kernel regression of y on x.

    The default bandwidth is the normal reference rule
    ``1.06 * std(x) * n ** (-1/5)``.
    """
    x, y = _check_xy(x, y, minimum=10)
    if bandwidth is None:
        bandwidth = 1.06 * float(np.std(x)) * x.size ** (-0.2)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return RegressionFit("kernel", x_train=x.copy(), y_train=y.copy(),
                         bandwidth=float(bandwidth))


def residual_tuples(fit: RegressionFit, table: BidTable) -> np.ndarray:
    """Normalized residuals grouped by auction, shape (T, N).

    Residuals of log bids around the fitted curve are pooled across all
    auctions, mapped onto [0, 1] by the common affine normalization, and
    regrouped so each row is one auction's signal tuple.
    """
    if not table.records:
        raise EmptySampleError("no auctions to residualize")
    n = len(table.records[0].bids)
    if any(len(rec.bids) != n for rec in table.records):
        raise ValueError("auctions carry differing bid counts; filter the table first")
    x, y, _ = scatter_points(table)
    u = y - fit.predict(x)
    return normalize(u).reshape(len(table.records), n)
