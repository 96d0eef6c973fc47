"""Likelihood-ratio inference under inequality constraints.

Testing affiliation is a one-sided problem: the null hypothesis is the
cone cut out by the TP2 rows, so twice the log-likelihood gap between the
symmetric and the affiliated fit is asymptotically a mixture of chi-square
distributions (chi-bar-squared).  The mixture weights depend on the
covariance of the constraint residuals and are simulated: draw Gaussians
with that covariance, project each onto the nonnegative cone in the
inverse-covariance metric, and tabulate how many coordinates bind.

Because the weights are problem specific, two levels of critical value
are also reported that do not require them: the lower bound treats the
statistic as a half-and-half mix of a point mass and chi-square(1), and
the upper bound as an even mix of chi-square(J-1) and chi-square(J).  A
statistic below the lower bound cannot be rejected under any weights; one
above the upper bound is rejected under any weights; in between the
simulated weights settle it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from . import projection
from .affiliation import ConstraintSet, generate_constraints
from .errors import DegenerateCovarianceError
from .estimate import (SolverOptions, loglik, mle_affiliated,
                       mle_independent_symmetric, mle_symmetric,
                       mle_unconstrained)
from .grid import CellArray
from .symmetry import enumerate_orbits

__all__ = [
    "ConstraintCovariance",
    "ChibarWeights",
    "TestOptions",
    "TestReport",
    "lr_statistic",
    "constraint_covariance",
    "chibar_weights",
    "chibar_pvalue",
    "kodde_palm_bounds",
    "decide",
    "run_test",
]


def lr_statistic(loglik_full: float, loglik_constrained: float) -> float:
    """Twice the likelihood gap, clamped at zero.

    The constrained maximum can exceed the full one only by solver noise,
    so tiny negative gaps are treated as exact zeros.
    """
    stat = 2.0 * (loglik_full - loglik_constrained)
    return max(stat, 0.0)


@dataclass(frozen=True)
class ConstraintCovariance:
    """Asymptotic covariance of the TP2 residuals at an estimate.

    ``sigma`` is the covariance of the orbit mass estimates, ``h`` the
    Jacobian of the log-space rows, and ``pi0 = h sigma h'`` the residual
    covariance that drives the mixture weights.
    """

    sigma: np.ndarray
    h: np.ndarray
    pi0: np.ndarray


def constraint_covariance(masses: CellArray, cset: ConstraintSet,
                          n_auctions: int) -> ConstraintCovariance:
    """Delta-method covariance of the constraint residuals.

    Parameters
    ----------
    masses : CellArray
        A symmetric mass array, normally the affiliated estimate.
    cset : ConstraintSet
        Symmetric constraint set matching the grid.
    n_auctions : int
        Sample size T behind the estimate.

    Raises
    ------
    DegenerateCovarianceError
        If an orbit entering some row has zero estimated mass, where the
        log residual has no finite variance.
    """
    if masses.kind != "mass":
        raise ValueError("constraint covariance needs a mass array")
    if not cset.symmetric:
        raise ValueError("constraint covariance is defined for symmetric constraint sets")
    if cset.k != masses.grid.k or cset.n_bidders != masses.grid.n_bidders:
        raise ValueError("constraint set does not match the array's grid shape")
    if n_auctions < 1:
        raise ValueError("n_auctions must be positive")
    orbits = enumerate_orbits(cset.k, cset.n_bidders)
    w = orbits.sizes.astype(np.float64)
    rho = orbits.totals(masses.values) / w
    spread = np.abs(masses.values - orbits.expand(rho)).max()
    if spread > 1e-8:
        raise ValueError("mass array is not symmetric across orbits")
    a_mat = cset.orbit_matrix(orbits)
    used = np.abs(a_mat).sum(axis=0) > 0
    dead = used & (rho <= 0.0)
    if dead.any():
        cell = orbits.representatives[int(np.flatnonzero(dead)[0])]
        raise DegenerateCovarianceError(
            f"estimated mass is zero on cell {cell}, which enters a constraint",
            cell=cell)
    # multinomial covariance of the orbit masses rho_o = q_o / w_o
    q = w * rho
    sigma = (np.diag(q) - np.outer(q, q)) / (n_auctions * np.outer(w, w))
    with np.errstate(divide="ignore"):
        h = np.where(used[None, :], a_mat / np.where(rho > 0, rho, 1.0)[None, :], 0.0)
    pi0 = h @ sigma @ h.T
    pi0 = 0.5 * (pi0 + pi0.T)
    return ConstraintCovariance(sigma, h, pi0)


@dataclass(frozen=True)
class ChibarWeights:
    """Simulated mixture weights.

    ``values[j]`` estimates the probability that exactly j constraints
    bind in the projected Gaussian; values sum to one exactly.  ``ridge``
    is the diagonal loading that was needed to factor the covariance,
    zero in the regular case.
    """

    values: np.ndarray
    draws: int
    seed: int
    ridge: float = 0.0


def chibar_weights(pi0: np.ndarray, draws: int = 100_000,
                   seed: int = 0) -> ChibarWeights:
    """Simulate chi-bar-squared weights for a residual covariance.

    Draws are generated up front from a counter-based generator, so the
    result depends only on ``(pi0, draws, seed)`` and never on thread
    scheduling.
    """
    pi0 = np.asarray(pi0, dtype=np.float64)
    if pi0.ndim != 2 or pi0.shape[0] != pi0.shape[1]:
        raise ValueError("pi0 must be square")
    if draws < 1:
        raise ValueError("draws must be positive")
    j = pi0.shape[0]
    if j == 0:
        return ChibarWeights(np.array([1.0]), draws, seed)
    if np.abs(pi0 - pi0.T).max() > 1e-8 * max(1.0, np.abs(pi0).max()):
        raise ValueError("pi0 must be symmetric")
    ridge = 0.0
    try:
        chol = scipy.linalg.cholesky(pi0, lower=True)
    except np.linalg.LinAlgError:
        ridge = 1e-10 * float(np.trace(pi0)) / j
        try:
            chol = scipy.linalg.cholesky(pi0 + ridge * np.eye(j), lower=True)
        except np.linalg.LinAlgError:
            raise DegenerateCovarianceError(
                "constraint covariance is not positive semidefinite "
                "even after diagonal loading")
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = rng.standard_normal((draws, j)) @ chol.T
    metric = scipy.linalg.cho_solve((chol, True), np.eye(j))
    metric = 0.5 * (metric + metric.T)
    counts = projection.binding_counts(metric, z)
    values = np.bincount(counts, minlength=j + 1).astype(np.float64) / draws
    # counts partition the draws; push rounding error into the largest weight
    for _ in range(3):
        excess = values.sum() - 1.0
        if excess == 0.0:
            break
        values[int(np.argmax(values))] -= excess
    return ChibarWeights(values, draws, seed, ridge)


def chibar_pvalue(stat: float, weights) -> float:
    """Tail probability of the weighted chi-square mixture at ``stat``.

    The degree-zero component is a point mass at the origin, so it
    contributes only when the statistic is nonpositive.
    """
    w = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a nonempty vector")
    if (w < -1e-12).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to one")
    tail = 1.0 if stat <= 0.0 else 0.0
    p = w[0] * tail
    for dof in range(1, w.size):
        p += w[dof] * float(scipy.special.gammaincc(dof / 2.0, max(stat, 0.0) / 2.0))
    return float(min(max(p, 0.0), 1.0))


def _upper_tail(c: float, dof: int) -> float:
    if dof == 0:
        return 1.0 if c <= 0.0 else 0.0
    return float(scipy.special.gammaincc(dof / 2.0, c / 2.0))


def _bisect(fun, lo: float, hi: float, tol: float = 1e-8) -> float:
    flo, fhi = fun(lo), fun(hi)
    if flo < 0.0 or fhi > 0.0:
        raise ValueError("bisection is not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fun(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kodde_palm_bounds(j: int, size: float) -> tuple[float, float]:
    """Critical-value bounds that hold for every weight vector.

    The lower bound solves ``0.5 P(chi2_1 >= c) = size`` and the upper
    bound ``0.5 [P(chi2_{J-1} >= c) + P(chi2_J >= c)] = size``; for J = 1
    they coincide.
    """
    if j < 1:
        raise ValueError("j must be at least 1")
    if not (0.0 < size < 0.5):
        raise ValueError("size must be in (0, 0.5)")
    lower = _bisect(lambda c: 0.5 * _upper_tail(c, 1) - size, 0.0, 1e3)
    upper = _bisect(
        lambda c: 0.5 * (_upper_tail(c, j - 1) + _upper_tail(c, j)) - size, 0.0, 1e3)
    return lower, upper


def decide(stat: float, lower: float, upper: float) -> str:
    """Three-way decision from the bound pair."""
    if not (lower <= upper):
        raise ValueError("bounds are out of order")
    if stat < lower:
        return "fail_to_reject"
    if stat > upper:
        return "reject"
    return "inconclusive"


@dataclass(frozen=True)
class TestOptions:
    """Options for :func:`run_test`."""

    constraint_mode: str = "adjacent"
    solver: SolverOptions = field(default_factory=SolverOptions)
    weight_draws: int = 100_000
    seed: int = 0
    size: float = 0.05


@dataclass(frozen=True)
class TestReport:
    """Everything the affiliation test produced, JSON-serializable."""

    loglik_unconstrained: float
    loglik_symmetric: float
    loglik_affiliated: float
    loglik_independent: float
    loglik_center: float
    lr_stat: float
    lr_stat_unconstrained: float
    j: int
    weights: tuple[float, ...]
    pvalue: float
    kp_lower: float | None
    kp_upper: float | None
    decision: str
    seed: int
    options: dict
    t_auctions: int
    breakpoints: tuple[float, ...]
    n_bidders: int
    active_constraints: tuple[int, ...]
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "loglik_unconstrained": self.loglik_unconstrained,
            "loglik_symmetric": self.loglik_symmetric,
            "loglik_affiliated": self.loglik_affiliated,
            "loglik_independent": self.loglik_independent,
            "loglik_center": self.loglik_center,
            "lr_stat": self.lr_stat,
            "lr_stat_unconstrained": self.lr_stat_unconstrained,
            "j": self.j,
            "weights": list(self.weights),
            "pvalue": self.pvalue,
            "kp_lower": self.kp_lower,
            "kp_upper": self.kp_upper,
            "decision": self.decision,
            "seed": self.seed,
            "options": dict(self.options),
            "t_auctions": self.t_auctions,
            "breakpoints": list(self.breakpoints),
            "n_bidders": self.n_bidders,
            "active_constraints": list(self.active_constraints),
            "flags": list(self.flags),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        return cls(
            loglik_unconstrained=float(data["loglik_unconstrained"]),
            loglik_symmetric=float(data["loglik_symmetric"]),
            loglik_affiliated=float(data["loglik_affiliated"]),
            loglik_independent=float(data["loglik_independent"]),
            loglik_center=float(data["loglik_center"]),
            lr_stat=float(data["lr_stat"]),
            lr_stat_unconstrained=float(data["lr_stat_unconstrained"]),
            j=int(data["j"]),
            weights=tuple(float(v) for v in data["weights"]),
            pvalue=float(data["pvalue"]),
            kp_lower=None if data["kp_lower"] is None else float(data["kp_lower"]),
            kp_upper=None if data["kp_upper"] is None else float(data["kp_upper"]),
            decision=str(data["decision"]),
            seed=int(data["seed"]),
            options=dict(data["options"]),
            t_auctions=int(data["t_auctions"]),
            breakpoints=tuple(float(b) for b in data["breakpoints"]),
            n_bidders=int(data["n_bidders"]),
            active_constraints=tuple(int(v) for v in data["active_constraints"]),
            flags=tuple(str(f) for f in data["flags"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))

    def summary_text(self) -> str:
        k = len(self.breakpoints) - 1
        bp = ", ".join(f"{b:g}" for b in self.breakpoints)
        lines = [
            f"Affiliation test on {self.t_auctions} auctions with "
            f"{self.n_bidders} bids each, {k} bins per bidder (breakpoints {bp}).",
            "",
            f"Log likelihood, unconstrained:          {self.loglik_unconstrained:.2f}",
            f"Log likelihood, symmetric:              {self.loglik_symmetric:.2f}",
            f"Log likelihood, symmetric + affiliated: {self.loglik_affiliated:.2f}",
            f"Log likelihood, independent bids:       {self.loglik_independent:.2f}",
            f"Log likelihood, simplex center:         {self.loglik_center:.2f}",
            "",
            f"Likelihood ratio statistic (symmetric vs affiliated): {self.lr_stat:.4f}",
            f"Inequality rows: {self.j}; active at the estimate: "
            f"{list(self.active_constraints) or 'none'}.",
        ]
        if self.kp_lower is not None:
            lines += [
                f"Simulated mixture weights: "
                + ", ".join(f"{v:.4f}" for v in self.weights),
                f"p-value: {self.pvalue:.4f}.",
                f"Critical value bounds at size {self.options.get('size', 0.05):g}: "
                f"lower {self.kp_lower:.4f}, upper {self.kp_upper:.4f}.",
            ]
        verdict = {
            "reject": "The affiliation hypothesis is rejected.",
            "fail_to_reject": "The affiliation hypothesis is not rejected.",
            "inconclusive": "The bound pair is inconclusive; the simulated "
                            "weights carry the decision via the p-value.",
        }[self.decision]
        lines += ["", f"Decision: {self.decision}. {verdict}"]
        if self.flags:
            lines.append("Flags: " + ", ".join(self.flags))
        return "\n".join(lines) + "\n"


def run_test(counts: CellArray, options: TestOptions | None = None) -> TestReport:
    """Full affiliation test on a counts array.

    Fits the unconstrained, symmetric, independent, and affiliated models,
    forms the likelihood-ratio statistic for symmetry against symmetry
    plus affiliation, simulates the mixture weights at the affiliated
    estimate, and reports the p-value together with the weight-free
    critical value bounds.
    """
    opts = options or TestOptions()
    grid = counts.grid
    t = int(counts.values.sum())
    cset = generate_constraints(grid.k, grid.n_bidders, opts.constraint_mode, True)

    unc = mle_unconstrained(counts)
    sym = mle_symmetric(counts)
    ind = mle_independent_symmetric(counts)
    aff = mle_affiliated(counts, cset, opts.solver)
    center = CellArray("mass", np.full(grid.shape, 1.0 / grid.n_cells), grid)
    ll_center = loglik(counts, center)

    lr = lr_statistic(sym.loglik, aff.loglik)
    lr_unc = lr_statistic(unc.loglik, aff.loglik)

    flags = []
    if aff.iterations == 0:
        flags.append("symmetric_mle_feasible")
    widths = grid.widths()
    if not np.allclose(widths, widths[0]):
        # cells carry unequal volume, so mass and height views differ and
        # the adding-up identity is volume-weighted
        flags.append("non_equispaced_grid")
    if cset.j == 0:
        weights = (1.0,)
        pvalue = 1.0
        kp_lower = kp_upper = None
        decision = "fail_to_reject"
    else:
        cov = constraint_covariance(aff.masses, cset, t)
        wts = chibar_weights(cov.pi0, opts.weight_draws, opts.seed)
        if wts.ridge > 0.0:
            flags.append("covariance_ridged")
        weights = tuple(float(v) for v in wts.values)
        pvalue = chibar_pvalue(lr, wts.values)
        kp_lower, kp_upper = kodde_palm_bounds(cset.j, opts.size)
        decision = decide(lr, kp_lower, kp_upper)

    options_echo = {
        "constraint_mode": opts.constraint_mode,
        "weight_draws": opts.weight_draws,
        "size": opts.size,
        "tol": opts.solver.tol,
        "max_iter": opts.solver.max_iter,
        "epsilon_floor": opts.solver.epsilon_floor,
        "kernel": projection.IMPLEMENTATION,
    }
    return TestReport(
        loglik_unconstrained=unc.loglik,
        loglik_symmetric=sym.loglik,
        loglik_affiliated=aff.loglik,
        loglik_independent=ind.loglik,
        loglik_center=ll_center,
        lr_stat=lr,
        lr_stat_unconstrained=lr_unc,
        j=cset.j,
        weights=weights,
        pvalue=pvalue,
        kp_lower=kp_lower,
        kp_upper=kp_upper,
        decision=decision,
        seed=opts.seed,
        options=options_echo,
        t_auctions=t,
        breakpoints=grid.breakpoints,
        n_bidders=grid.n_bidders,
        active_constraints=aff.active_constraints,
        flags=tuple(flags),
    )
