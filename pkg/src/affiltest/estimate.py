"""Multinomial maximum likelihood on the grid, with and without affiliation.

Cell occupancy is multinomial, so the log likelihood is
``sum(y * log pi)`` over cells.  Under bidder symmetry the free parameters
are one mass per orbit and the likelihood depends on data only through
orbit count totals.  The affiliated estimator additionally imposes the
TP2 rows, which are linear in log mass, so the feasible set is convex in
log space and the constrained problem has a unique maximum.

The constrained solve is a log-barrier interior-point method on the orbit
log-mass vector theta:

    maximize   ytil' theta
    subject to A theta >= 0          (TP2 rows, orbit coordinates)
               theta   >= log(eps)   (mass floor)
               sum(w * exp(theta)) = 1

The simplex equality is maintained exactly by renormalizing every iterate;
TP2 rows are invariant to that shift because their coefficients sum to
zero.  Each barrier stage takes damped Newton steps on the KKT system of
the equality-constrained barrier subproblem.

When the symmetric maximum already satisfies every row (at the standard
check tolerance) it is returned directly: a feasible unconstrained
maximizer is the constrained maximizer, and the likelihood-ratio statistic
is then exactly zero rather than barrier-path noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .affiliation import ConstraintSet, check_tp2, generate_constraints
from .errors import SolverError
from .grid import CellArray
from .symmetry import enumerate_orbits

__all__ = [
    "SolverOptions",
    "EstimateResult",
    "loglik",
    "mle_unconstrained",
    "mle_symmetric",
    "mle_independent_symmetric",
    "mle_affiliated",
]


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for the constrained estimator.

    tol
        Target for the scaled KKT residual and the final barrier
        parameter.
    max_iter
        Global Newton step budget across all barrier stages.
    epsilon_floor
        Lower bound on every orbit mass.  Small enough that the floor's
        likelihood cost is far below reporting precision, large enough to
        keep logs finite.
    activity_tol
        A row counts as active when its slack is at most this.
    """

    tol: float = 1e-8
    max_iter: int = 500
    epsilon_floor: float = 1e-12
    barrier_start: float = 1.0
    barrier_shrink: float = 0.1
    activity_tol: float = 1e-6


@dataclass(frozen=True)
class EstimateResult:
    """A fitted grid distribution and solver diagnostics.

    ``kkt_residual`` is the infinity norm of the scaled first-order
    conditions (counts scaled by max(1, T)); closed-form fits report 0.
    """

    masses: CellArray
    loglik: float
    active_constraints: tuple[int, ...]
    kkt_residual: float
    iterations: int


def loglik(counts: CellArray, masses: CellArray) -> float:
    """Multinomial log likelihood ``sum(y * log pi)``.

    Cells with zero count contribute nothing regardless of mass; a
    positive count on a zero-mass cell gives ``-inf``.
    """
    if counts.kind != "counts":
        raise ValueError("first argument must be a counts array")
    if masses.kind != "mass":
        raise ValueError("second argument must be a mass array")
    if counts.grid.shape != masses.grid.shape:
        raise ValueError("count and mass arrays live on different grids")
    y = counts.values.ravel().astype(np.float64)
    p = masses.values.ravel()
    pos = y > 0
    if (p[pos] == 0.0).any():
        return float("-inf")
    return float(np.sum(y[pos] * np.log(p[pos])))


def mle_unconstrained(counts: CellArray) -> EstimateResult:
    """Cell frequencies, the unrestricted maximum."""
    y = counts.values.astype(np.float64)
    t = y.sum()
    if t <= 0:
        raise ValueError("counts sum to zero")
    masses = CellArray("mass", y / t, counts.grid)
    return EstimateResult(masses, loglik(counts, masses), (), 0.0, 0)


def mle_symmetric(counts: CellArray) -> EstimateResult:
    """Maximum under bidder exchangeability: orbit counts spread evenly."""
    orbits = enumerate_orbits(counts.grid.k, counts.grid.n_bidders)
    ytil = orbits.totals(counts.values)
    t = ytil.sum()
    if t <= 0:
        raise ValueError("counts sum to zero")
    rho = ytil / (t * orbits.sizes)
    masses = CellArray("mass", orbits.expand(rho), counts.grid)
    return EstimateResult(masses, loglik(counts, masses), (), 0.0, 0)


def mle_independent_symmetric(counts: CellArray) -> EstimateResult:
    """Product measure with a common marginal fitted to pooled bins."""
    y = counts.values.astype(np.float64)
    t = y.sum()
    if t <= 0:
        raise ValueError("counts sum to zero")
    n = counts.grid.n_bidders
    pooled = np.zeros(counts.grid.k)
    for axis in range(n):
        other = tuple(ax for ax in range(n) if ax != axis)
        pooled += y.sum(axis=other)
    q = pooled / (n * t)
    prod = q.copy()
    for _ in range(n - 1):
        prod = np.multiply.outer(prod, q)
    masses = CellArray("mass", prod / prod.sum(), counts.grid)
    pos = pooled > 0
    ll = float(np.sum(pooled[pos] * np.log(q[pos])))
    return EstimateResult(masses, ll, (), 0.0, 0)


def _orbit_loglik(ytil: np.ndarray, rho: np.ndarray) -> float:
    pos = ytil > 0
    if (rho[pos] == 0.0).any():
        return float("-inf")
    return float(np.sum(ytil[pos] * np.log(rho[pos])))


def _supermodular_seed(orbits, w) -> np.ndarray:
    # log masses proportional to a pairwise product score: every TP2 row
    # has slack at least tau at this point, so it is strictly interior
    quad = np.array([sum(a * b for a, b in itertools.combinations(rep, 2))
                     for rep in orbits.representatives], dtype=np.float64)
    if orbits.n_bidders < 2:
        quad = np.zeros(orbits.m)
    spread = quad.max() - quad.min()
    tau = 4.0 / max(1.0, spread)
    theta = quad * tau
    return theta - np.log(np.sum(w * np.exp(theta)))


def _initial_point(theta_data, theta_sup, a_mat, w, log_eps):
    for lam in (0.0, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0):
        cand = (1.0 - lam) * theta_data + lam * theta_sup
        cand = cand - np.log(np.sum(w * np.exp(cand)))
        slack_ok = a_mat.shape[0] == 0 or (a_mat @ cand).min() > 1e-6
        if slack_ok and (cand - log_eps).min() > 1.0:
            return cand
    return theta_sup  # pragma: no cover


def _certified_kkt(ytil, w, a_mat, theta, log_eps, scale, opts):
    """Fit nonnegative multipliers at theta and measure the conditions.

    The barrier path supplies multipliers mu / slack, but a binding slack
    is a difference of order-one logs, so that quotient carries a noise
    floor far above machine precision.  Fitting the multipliers directly
    by nonnegative least squares gives a clean certificate: the returned
    value bounds how far theta is from stationarity with the best
    admissible multipliers, scaled by max(1, T).

    Every row is offered as a multiplier column.  A marginal row (tiny
    multiplier) ends the barrier path at slack mu / lambda, which sits
    above any fixed activity cutoff, and dropping it strands that share
    of the gradient in the residual.  Complementarity is still charged,
    so a spurious multiplier on a wide-open row inflates the certificate
    rather than hiding.  If the all-rows fit certifies badly, the
    tight-slack subset is scored as well; both are upper bounds for the
    best admissible multipliers, so the smaller one stands.

    Returns (certificate, lam) with lam the fitted multiplier per row.
    """
    s = a_mat @ theta if a_mat.size else np.empty(0)
    d = theta - log_eps
    q = w * np.exp(theta)
    floored = d <= 1.0
    feas = max(0.0, float(-s.min()) if s.size else 0.0, float(-d.min()))
    j = a_mat.shape[0] if a_mat.size else 0

    def fit(rows):
        cols = [-q[:, None], q[:, None]]
        n_rows = int(rows.sum())
        if n_rows:
            cols.insert(0, a_mat[rows].T)
        if floored.any():
            cols.append(np.eye(ytil.size)[:, floored])
        c_mat = np.hstack(cols)
        x, _ = scipy.optimize.nnls(c_mat, -ytil)
        stat = float(np.abs(ytil + c_mat @ x).max())
        comp = float((x[:n_rows] * s[rows]).max()) if n_rows else 0.0
        if floored.any():
            zeta = x[n_rows + 2:]
            comp = max(comp, float((zeta * d[floored]).max()))
        lam = np.zeros(j)
        lam[rows] = x[:n_rows]
        return max(stat, comp), lam

    value, lam = fit(np.ones(j, dtype=bool))
    if j and value > opts.tol * scale:
        tight, lam_tight = fit(s <= opts.activity_tol)
        if tight < value:
            value, lam = tight, lam_tight
    return max(value, feas) / scale, lam


def _solve_barrier(ytil, w, a_mat, theta_seed, opts):
    """Interior-point solve; returns (theta, kkt_residual, iterations)."""
    m = ytil.size
    t_total = float(ytil.sum())
    scale = max(1.0, t_total)
    log_eps = float(np.log(opts.epsilon_floor))

    rho_sym = ytil / (t_total * w)
    mix = 0.9 * rho_sym + 0.1 / float(np.sum(w))
    theta_data = np.log(mix)
    theta_data -= np.log(np.sum(w * np.exp(theta_data)))
    theta = _initial_point(theta_data, theta_seed, a_mat, w, log_eps)

    n_stages = int(np.ceil(np.log(opts.barrier_start / opts.tol)
                           / np.log(1.0 / opts.barrier_shrink)))
    mus = [opts.barrier_start * opts.barrier_shrink ** i for i in range(n_stages)]
    mus.append(opts.tol)

    nu = scale
    iters = 0
    for mu in mus:
        target = 0.1 * mu * scale
        prev_resid = np.inf
        plateau = 0
        while iters < opts.max_iter:
            s = a_mat @ theta
            d = theta - log_eps
            q = w * np.exp(theta)
            grad_barrier = -ytil - mu / d - mu * (a_mat.T @ (1.0 / s))
            resid = float(np.abs(grad_barrier + nu * q).max())
            if resid <= target:
                break
            # a binding slack is computed by cancellation, so stationarity
            # bottoms out around eps / slack; stop pushing once it stalls
            plateau = plateau + 1 if resid > 0.8 * prev_resid else 0
            prev_resid = min(prev_resid, resid)
            if plateau >= 4:
                break
            hess = np.diag(mu / d ** 2 + nu * q) + (a_mat.T * (mu / s ** 2)) @ a_mat
            try:
                chol = scipy.linalg.cho_factor(hess)
            except np.linalg.LinAlgError:
                hess = hess + np.eye(m) * (1e-12 * np.trace(hess) / m)
                chol = scipy.linalg.cho_factor(hess)
            x1 = scipy.linalg.cho_solve(chol, -grad_barrier)
            x2 = scipy.linalg.cho_solve(chol, q)
            nu_new = float(q @ x1) / float(q @ x2)
            delta = x1 - nu_new * x2
            nu = max(nu_new, 1e-8 * scale)
            # fraction-to-boundary cap, then backtrack on the barrier merit
            alpha = 1.0
            a_delta = a_mat @ delta
            shrinking = a_delta < 0
            if shrinking.any():
                alpha = min(alpha, 0.99 * float((s[shrinking] / -a_delta[shrinking]).min()))
            falling = delta < 0
            if falling.any():
                alpha = min(alpha, 0.99 * float((d[falling] / -delta[falling]).min()))
            phi0 = (-float(ytil @ theta) - mu * float(np.log(d).sum())
                    - mu * float(np.log(s).sum()))
            slope = float(grad_barrier @ delta)
            accepted = False
            for _ in range(40):
                cand = theta + alpha * delta
                cand = cand - np.log(np.sum(w * np.exp(cand)))
                d_c = cand - log_eps
                s_c = a_mat @ cand
                if d_c.min() > 0 and s_c.min() > 0:
                    phi_c = (-float(ytil @ cand) - mu * float(np.log(d_c).sum())
                             - mu * float(np.log(s_c).sum()))
                    if phi_c <= phi0 + 1e-4 * alpha * slope or phi_c < phi0:
                        theta = cand
                        accepted = True
                        break
                alpha *= 0.5
            iters += 1
            if not accepted:
                break

    kkt, lam = _certified_kkt(ytil, w, a_mat, theta, log_eps, scale, opts)
    return theta, kkt, lam, iters


def mle_affiliated(counts: CellArray, constraints: ConstraintSet | None = None,
                   options: SolverOptions | None = None) -> EstimateResult:
    """Symmetric maximum likelihood under the TP2 rows.

    Parameters
    ----------
    counts : CellArray
    constraints : ConstraintSet, optional
        Must be symmetric and match the grid shape.  Defaults to the
        adjacent rows.
    options : SolverOptions, optional

    Raises
    ------
    SolverError
        If the interior-point iteration exhausts its budget; the best
        iterate is attached to the exception.
    """
    opts = options or SolverOptions()
    grid = counts.grid
    cset = constraints or generate_constraints(grid.k, grid.n_bidders)
    if not cset.symmetric:
        raise ValueError("affiliated estimation uses symmetric constraint sets")
    if cset.k != grid.k or cset.n_bidders != grid.n_bidders:
        raise ValueError("constraint set does not match the grid shape")

    sym = mle_symmetric(counts)
    if cset.j == 0 or not check_tp2(sym.masses, cset):
        return replace(sym, active_constraints=_active_rows(sym.masses, cset,
                                                            opts.activity_tol))

    orbits = enumerate_orbits(grid.k, grid.n_bidders)
    ytil = orbits.totals(counts.values)
    w = orbits.sizes.astype(np.float64)
    a_mat = cset.orbit_matrix(orbits)

    seed = _supermodular_seed(orbits, w)
    theta, kkt, lam, iters = _solve_barrier(ytil, w, a_mat, seed, opts)

    rho = np.exp(theta)
    rho = rho / float(np.sum(w * rho))
    masses = CellArray("mass", orbits.expand(rho), grid)
    slack = a_mat @ np.log(rho)
    # a marginal row finishes the path at slack mu / lambda, past any fixed
    # cutoff, so a certified multiplier marks activity as well
    scale = max(1.0, float(ytil.sum()))
    active = tuple(int(r) for r in np.flatnonzero(
        (slack <= opts.activity_tol) | (lam > opts.tol * scale)))
    result = EstimateResult(masses, _orbit_loglik(ytil, rho), active, kkt, iters)
    if kkt > opts.tol:
        raise SolverError(f"constrained fit stopped at scaled KKT residual {kkt:.3e} "
                          f"after {iters} Newton steps", result=result)
    return result


def _active_rows(masses: CellArray, cset: ConstraintSet, tol: float):
    from .affiliation import tp2_residuals

    if cset.j == 0:
        return ()
    res = tp2_residuals(masses, cset)
    return tuple(int(r) for r in np.flatnonzero(np.abs(res) <= tol))
